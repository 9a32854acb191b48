//! Signal-approximation training: loss on the resynthesized waveform,
//! backpropagated through synthesis, mask and model.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::datagen::{epoch_stream, DatasetManifest, MixedPair};
use crate::error::{Error, Result};
use crate::masking::MaskVariant;
use crate::nn::{save_weights, Dctcrn, ModelConfig, ParameterSet};
use crate::objective::{si_snr, si_snr_grad, SiSnrOptions};
use crate::transform::ShortTimeDct;

/// Floor of the learning-rate schedule.
pub const MIN_LR: f64 = 1e-6;

/// `-SI-SNR` of the enhanced waveform and its gradient with respect to every
/// parameter. The model starts from an all-zero state.
pub fn loss_and_grad(
    model: &Dctcrn,
    stdct: &ShortTimeDct,
    noisy: &[f64],
    clean: &[f64],
    opts: &SiSnrOptions,
    clip: bool,
) -> Result<(f64, ParameterSet)> {
    let y = stdct.analyze(noisy)?;
    let (shat, tape) = model.estimate(&y, clip)?;
    let est = stdct.synthesize(&shat, noisy.len())?;
    let (value, d_est) = si_snr_grad(&est, clean, opts)?;
    let d_loss: Vec<f64> = d_est.iter().map(|g| -g).collect();
    let d_shat = stdct.synthesize_adjoint(&d_loss, shat.frames())?;
    Ok((-value, model.estimate_backward(&tape, d_shat.data())))
}

/// Enhanced waveform, same length as `noisy`, without recording a tape.
pub fn enhance_waveform(
    model: &Dctcrn,
    stdct: &ShortTimeDct,
    noisy: &[f64],
    clip: bool,
) -> Result<Vec<f64>> {
    let y = stdct.analyze(noisy)?;
    let shat = model.enhance_spectrogram(&y, clip)?;
    stdct.synthesize(&shat, noisy.len())
}

/// `-SI-SNR` of the enhanced waveform.
pub fn eval_loss(
    model: &Dctcrn,
    stdct: &ShortTimeDct,
    noisy: &[f64],
    clean: &[f64],
    opts: &SiSnrOptions,
    clip: bool,
) -> Result<f64> {
    let est = enhance_waveform(model, stdct, noisy, clip)?;
    Ok(-si_snr(&est, clean, opts)?)
}

/// Mean SI-SNR (dB) of the noisy inputs and of the enhanced outputs.
pub fn si_snr_before_after(model: &Dctcrn, pairs: &[MixedPair], clip: bool) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let stdct = ShortTimeDct::new(model.frame_params())?;
    let opts = SiSnrOptions::default();
    let scores: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|p| {
            let est = enhance_waveform(model, &stdct, &p.noisy, clip)?;
            Ok((
                si_snr(&p.noisy, &p.clean, &opts)?,
                si_snr(&est, &p.clean, &opts)?,
            ))
        })
        .collect();
    let (mut before, mut after) = (0.0, 0.0);
    for s in scores {
        let (b, a) = s?;
        before += b;
        after += a;
    }
    let n = pairs.len() as f64;
    Ok((before / n, after / n))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParameterSet,
    v: ParameterSet,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &ParameterSet {
        &self.m
    }

    pub fn second_moment(&self) -> &ParameterSet {
        &self.v
    }

    /// One update. Nothing changes if any gradient is non-finite or has the
    /// wrong shape.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> Result<()> {
        if grads.names() != params.names() || grads.names() != self.m.names() {
            return Err(Error::ShapeMismatch(
                "gradient names differ from parameters".into(),
            ));
        }
        for ((name, g), p) in grads.iter().zip(params.tensors()) {
            if g.shape() != p.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Learning rate after the epochs whose validation losses are `val`:
/// halved (by `decay`) at every epoch past `warm_epochs` whose loss exceeds
/// the previous one, never below [`MIN_LR`].
pub fn lr_schedule(val: &[f64], lr0: f64, decay: f64, warm_epochs: usize) -> f64 {
    let mut lr = lr0;
    for i in 1..val.len() {
        if i >= warm_epochs && val[i] > val[i - 1] {
            lr = (lr * decay).max(MIN_LR);
        }
    }
    lr
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a strictly lower validation loss.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Overrides the model config's variant when set.
    pub mask_variant: Option<MaskVariant>,
    /// Global-norm gradient clipping; 0 disables.
    pub grad_clip_norm: f64,
    /// Epochs before the learning-rate schedule may decay.
    pub warm_epochs: usize,
    /// Stop once this many optimizer steps have run.
    pub max_steps: Option<usize>,
    /// Passes over the training items per epoch.
    pub item_repeats: usize,
    /// Reuse the epoch-0 mixtures every epoch instead of remixing.
    pub fixed_mixtures: bool,
    /// Apply the magnitude clip to the estimate during training too.
    pub clip_estimate: bool,
    pub si_snr: SiSnrOptions,
    /// Where to write per-epoch checkpoints and the history sidecar.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay_factor: 0.5,
            max_epochs: 300,
            patience: 10,
            batch_size: 8,
            seed: 0,
            mask_variant: None,
            grad_clip_norm: 5.0,
            warm_epochs: 0,
            max_steps: None,
            item_repeats: 1,
            fixed_mixtures: false,
            clip_estimate: false,
            si_snr: SiSnrOptions::default(),
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule: at most 2000 steps of batch 8, stopping after
    /// 10 epochs without validation improvement.
    pub fn toy(seed: u64) -> Self {
        Self {
            max_epochs: 2000,
            patience: 10,
            max_steps: Some(2000),
            seed,
            ..Self::default()
        }
    }

    /// Fitting a single utterance: batch 1, 20 steps per epoch on the same
    /// mixture, 60 epochs.
    pub fn overfit(seed: u64) -> Self {
        Self {
            lr0: 3e-3,
            max_epochs: 60,
            patience: 60,
            batch_size: 1,
            item_repeats: 20,
            fixed_mixtures: true,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.item_repeats == 0 {
            return bad("batch size and item repeats must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) of the returned parameters.
    pub best_epoch: usize,
    pub steps: usize,
}

impl TrainHistory {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    /// `epoch,train_loss,val_loss,lr` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.lr
            ));
        }
        s
    }
}

/// Per-item losses and summed gradients, reduced in item order.
fn batch_grad(
    model: &Dctcrn,
    stdct: &ShortTimeDct,
    batch: &[MixedPair],
    cfg: &TrainConfig,
) -> Result<(f64, ParameterSet)> {
    let results: Vec<Result<(f64, ParameterSet)>> = batch
        .par_iter()
        .map(|p| {
            let (loss, g) = loss_and_grad(
                model,
                stdct,
                &p.noisy,
                &p.clean,
                &cfg.si_snr,
                cfg.clip_estimate,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { seed: p.seed });
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = model.params().zeros_like();
    let mut loss_sum = 0.0;
    for r in results {
        let (loss, g) = r?;
        loss_sum += loss;
        total.add_assign(&g);
    }
    let k = 1.0 / batch.len() as f64;
    total.scale(k);
    Ok((loss_sum * k, total))
}

fn mean_val_loss(
    model: &Dctcrn,
    stdct: &ShortTimeDct,
    val: &[MixedPair],
    cfg: &TrainConfig,
) -> Result<f64> {
    let losses: Vec<Result<f64>> = val
        .par_iter()
        .map(|p| {
            eval_loss(
                model,
                stdct,
                &p.noisy,
                &p.clean,
                &cfg.si_snr,
                cfg.clip_estimate,
            )
        })
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / val.len() as f64)
}

/// Trains from a seeded initialization and returns the parameters of the
/// epoch with the lowest validation loss. Validation uses the epoch-0
/// mixtures of `val` throughout.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &DatasetManifest,
    val_set: &DatasetManifest,
) -> Result<(Dctcrn, TrainHistory)> {
    train_with_progress(cfg, model_cfg, train_set, val_set, |_| {})
}

/// [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &DatasetManifest,
    val_set: &DatasetManifest,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(Dctcrn, TrainHistory)> {
    cfg.validate()?;
    let mut mcfg = model_cfg.clone();
    if let Some(v) = cfg.mask_variant {
        mcfg.mask_variant = v;
    }
    let mut model = Dctcrn::init(mcfg, cfg.seed)?;
    let stdct = ShortTimeDct::new(model.frame_params())?;
    let val: Vec<MixedPair> = epoch_stream(val_set, 0)?.collect::<Result<_>>()?;
    let fixed: Option<Vec<MixedPair>> = if cfg.fixed_mixtures {
        Some(epoch_stream(train_set, 0)?.collect::<Result<_>>()?)
    } else {
        None
    };
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    let mut adam = Adam::new(model.params());
    let mut history = TrainHistory::default();
    let mut best_params = model.params().clone();
    let mut best_val = f64::INFINITY;
    let mut lr = cfg.lr0;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let items: Vec<MixedPair> = match &fixed {
            Some(f) => f.clone(),
            None => epoch_stream(train_set, epoch as u64)?.collect::<Result<_>>()?,
        };
        let order: Vec<&MixedPair> = (0..cfg.item_repeats).flat_map(|_| items.iter()).collect();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut stop = false;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<MixedPair> = chunk.iter().map(|p| (*p).clone()).collect();
            let (loss, mut grads) = batch_grad(&model, &stdct, &batch, cfg)?;
            clip_global_norm(&mut grads, cfg.grad_clip_norm);
            adam.step(model.params_mut(), &grads, lr)?;
            loss_sum += loss;
            batches += 1;
            history.steps += 1;
            if cfg.max_steps.is_some_and(|m| history.steps >= m) {
                stop = true;
                break;
            }
        }
        let val_loss = mean_val_loss(&model, &stdct, &val, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { seed: cfg.seed });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            lr,
        };
        history.epochs.push(record);
        progress(&record);
        if val_loss < best_val {
            best_val = val_loss;
            best_params = model.params().clone();
            history.best_epoch = epoch;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            save_weights(dir.join(format!("epoch_{epoch:04}.dctw")), model.params())?;
            if history.best_epoch == epoch {
                save_weights(dir.join("best.dctw"), model.params())?;
            }
            let mut f = fs::File::create(dir.join("history.txt"))?;
            f.write_all(history.to_csv().as_bytes())?;
        }
        lr = lr_schedule(
            &history.val_losses(),
            cfg.lr0,
            cfg.decay_factor,
            cfg.warm_epochs,
        );
        if stop || epoch - history.best_epoch >= cfg.patience {
            break 'epochs;
        }
    }
    let best = Dctcrn::new(model.config().clone(), best_params)?;
    Ok((best, history))
}
