use super::config::ModelConfig;
use super::layers::{
    conv_backward, conv_forward, lstm_backward, lstm_forward, prelu_backward, prelu_forward,
    tconv_backward, tconv_forward, ConvGeom, LstmCache, LstmState, LstmWeights,
};
use super::params::{Layout, ParameterSet};
use crate::error::{Error, Result};
use crate::linalg::{gemm, matvec};
use crate::masking::{clip_coefficient, MaskActivation};
use crate::signal::FrameParams;
use crate::transform::DctSpectrogram;

/// Causal convolutional-recurrent mask estimator over cosine spectra.
///
/// The input is one channel of `input_bins` coefficients per frame. The
/// encoder halves the bins per layer, two LSTM layers run over the flattened
/// bottleneck, a linear map restores its width, and the decoder doubles the
/// bins back while concatenating the mirrored encoder outputs. The final
/// layer yields mask logits.
#[derive(Debug, Clone)]
pub struct Dctcrn {
    cfg: ModelConfig,
    params: ParameterSet,
    layout: Layout,
}

/// Per-layer history carried from one call of [`Dctcrn::forward`] to the
/// next, so that a stream can be processed in arbitrary chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    enc_hist: Vec<Vec<f64>>,
    dec_hist: Vec<Vec<f64>>,
    lstm: Vec<LstmState>,
}

/// Intermediate values of a training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    frames: usize,
    enc_cols: Vec<Vec<f64>>,
    enc_pre: Vec<Vec<f64>>,
    lstm_in: Vec<Vec<f64>>,
    lstm_cache: Vec<LstmCache>,
    lstm_out: Vec<f64>,
    dec_in: Vec<Vec<f64>>,
    dec_pre: Vec<Vec<f64>>,
}

/// A training forward pass through the mask: model tape plus what the mask
/// stage needs.
#[derive(Debug, Clone)]
pub struct EstimateTape {
    tape: Tape,
    logits: Vec<f64>,
    noisy: DctSpectrogram,
    shat_raw: Vec<f64>,
    clip: bool,
}

impl Dctcrn {
    pub fn new(cfg: ModelConfig, params: ParameterSet) -> Result<Self> {
        cfg.validate()?;
        let params = params.conform(&cfg)?;
        let layout = Layout::new(&cfg);
        Ok(Self {
            cfg,
            params,
            layout,
        })
    }

    /// Freshly initialized model, see [`ParameterSet::init`].
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = ParameterSet::init(&cfg, seed)?;
        Self::new(cfg, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    /// Mutable access for optimizers; names and shapes must not change.
    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    pub fn frame_params(&self) -> FrameParams {
        self.cfg.frame_params()
    }

    pub fn bins(&self) -> usize {
        self.cfg.input_bins
    }

    pub fn mask_activation(&self) -> MaskActivation {
        let alpha = self.layout.mask_alpha.map_or(0.0, |i| self.scalar(i));
        MaskActivation::for_variant(self.cfg.mask_variant, alpha)
    }

    fn tensor(&self, i: usize) -> &[f64] {
        self.params.tensors()[i].data()
    }

    fn scalar(&self, i: usize) -> f64 {
        self.tensor(i)[0]
    }

    fn enc_geom(&self, i: usize, frames: usize) -> ConvGeom {
        ConvGeom {
            c_in: self.cfg.encoder_in_channels(i),
            c_out: self.cfg.encoder_channels[i],
            frames,
            bins: self.cfg.encoder_bins(i),
            taps: self.cfg.kernel.freq,
        }
    }

    fn dec_geom(&self, k: usize, frames: usize) -> ConvGeom {
        ConvGeom {
            c_in: self.cfg.decoder_in_channels(k),
            c_out: self.cfg.decoder_channels[k],
            frames,
            bins: self.cfg.decoder_bins(k),
            taps: self.cfg.kernel.freq,
        }
    }

    fn lstm_weights(&self, l: usize) -> LstmWeights<'_> {
        let s = self.layout.lstm[l];
        LstmWeights {
            w_ih: self.tensor(s.w_ih),
            w_hh: self.tensor(s.w_hh),
            bias: self.tensor(s.bias),
            input: self.cfg.lstm_input(l),
            hidden: self.cfg.lstm_hidden,
        }
    }

    /// All-zero history, as at the start of a stream.
    pub fn new_state(&self) -> StreamState {
        let enc_hist = (0..self.cfg.depth())
            .map(|i| {
                let g = self.enc_geom(i, 0);
                vec![0.0; g.c_in * g.bins]
            })
            .collect();
        let dec_hist = (0..self.cfg.depth())
            .map(|k| {
                let g = self.dec_geom(k, 0);
                vec![0.0; g.c_out * 2 * g.taps * g.bins]
            })
            .collect();
        let lstm = (0..self.cfg.lstm_layers)
            .map(|_| LstmState::zeros(self.cfg.lstm_hidden))
            .collect();
        StreamState {
            enc_hist,
            dec_hist,
            lstm,
        }
    }

    /// Mask logits for `y` (`frames x bins`, row-major), continuing from
    /// `state` and leaving it ready for the next chunk.
    pub fn forward(&self, y: &[f64], state: &mut StreamState) -> Result<Vec<f64>> {
        self.check_input(y)?;
        Ok(self.run(y, state, None))
    }

    /// Forward pass from an all-zero state, recording what
    /// [`Dctcrn::backward`] needs.
    pub fn forward_train(&self, y: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(y)?;
        let mut state = self.new_state();
        let mut tape = Tape {
            frames: y.len() / self.bins(),
            enc_cols: Vec::new(),
            enc_pre: Vec::new(),
            lstm_in: Vec::new(),
            lstm_cache: Vec::new(),
            lstm_out: Vec::new(),
            dec_in: Vec::new(),
            dec_pre: Vec::new(),
        };
        let logits = self.run(y, &mut state, Some(&mut tape));
        Ok((logits, tape))
    }

    fn check_input(&self, y: &[f64]) -> Result<()> {
        if y.len() % self.bins() != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} input values is not a whole number of {}-bin frames",
                y.len(),
                self.bins()
            )));
        }
        Ok(())
    }

    fn run(&self, y: &[f64], state: &mut StreamState, mut tape: Option<&mut Tape>) -> Vec<f64> {
        let frames = y.len() / self.bins();
        let depth = self.cfg.depth();

        let mut enc_out: Vec<Vec<f64>> = Vec::with_capacity(depth);
        for i in 0..depth {
            let g = self.enc_geom(i, frames);
            let slots = self.layout.enc[i];
            let x = if i == 0 { y } else { &enc_out[i - 1] };
            let (pre, cols) = conv_forward(
                g,
                x,
                &state.enc_hist[i],
                self.tensor(slots.weight),
                self.tensor(slots.bias),
            );
            if frames > 0 {
                state.enc_hist[i] = last_frame(x, g.c_in, frames, g.bins);
            }
            let alpha = self.scalar(slots.alpha.expect("encoder layers have a slope"));
            let act = prelu_forward(&pre, alpha);
            if let Some(t) = tape.as_deref_mut() {
                t.enc_cols.push(cols);
                t.enc_pre.push(pre);
            }
            enc_out.push(act);
        }

        let c_b = self.cfg.bottleneck_channels();
        let f_b = self.cfg.bottleneck_bins();
        let mut seq = to_frame_major(&enc_out[depth - 1], c_b, frames, f_b);
        for l in 0..self.cfg.lstm_layers {
            let (out, cache) = lstm_forward(
                self.lstm_weights(l),
                &seq,
                &mut state.lstm[l],
                tape.is_some(),
            );
            if let Some(t) = tape.as_deref_mut() {
                t.lstm_in.push(std::mem::take(&mut seq));
                t.lstm_cache.push(cache.expect("cache requested"));
            }
            seq = out;
        }

        let width = self.cfg.bottleneck_width();
        let h = self.cfg.lstm_hidden;
        let w_proj = self.tensor(self.layout.proj_weight);
        let b_proj = self.tensor(self.layout.proj_bias);
        let mut proj = vec![0.0; frames * width];
        for (z, hv) in proj.chunks_exact_mut(width).zip(seq.chunks_exact(h)) {
            matvec(width, h, w_proj, hv, 0.0, z);
            for (zv, b) in z.iter_mut().zip(b_proj) {
                *zv += b;
            }
        }
        if let Some(t) = tape.as_deref_mut() {
            t.lstm_out = seq;
        }
        let mut prev = to_channel_major(&proj, c_b, frames, f_b);

        for k in 0..depth {
            let g = self.dec_geom(k, frames);
            let slots = self.layout.dec[k];
            let mut x = prev;
            x.extend_from_slice(&enc_out[depth - 1 - k]);
            let (pre, z_last) = tconv_forward(
                g,
                &x,
                &state.dec_hist[k],
                self.tensor(slots.weight),
                self.tensor(slots.bias),
            );
            state.dec_hist[k] = z_last;
            let out = match slots.alpha {
                Some(a) => prelu_forward(&pre, self.scalar(a)),
                None => pre.clone(),
            };
            if let Some(t) = tape.as_deref_mut() {
                t.dec_in.push(x);
                t.dec_pre.push(pre);
            }
            prev = out;
        }
        prev
    }

    /// Parameter gradients given the gradient of the logits.
    pub fn backward(&self, tape: &Tape, d_logits: &[f64]) -> ParameterSet {
        let mut grads = self.params.zeros_like();
        self.backward_into(tape, d_logits, &mut grads);
        grads
    }

    fn backward_into(&self, tape: &Tape, d_logits: &[f64], grads: &mut ParameterSet) {
        let frames = tape.frames;
        let depth = self.cfg.depth();
        assert_eq!(d_logits.len(), frames * self.bins());
        let mut d_enc: Vec<Vec<f64>> = (0..depth)
            .map(|i| {
                let g = self.enc_geom(i, frames);
                vec![0.0; g.c_out * frames * g.bins / 2]
            })
            .collect();

        let mut d_out = d_logits.to_vec();
        for k in (0..depth).rev() {
            let g = self.dec_geom(k, frames);
            let slots = self.layout.dec[k];
            let d_pre = match slots.alpha {
                Some(a) => {
                    let (d_pre, d_alpha) = prelu_backward(&tape.dec_pre[k], self.scalar(a), &d_out);
                    grads.tensors_mut()[a].data_mut()[0] += d_alpha;
                    d_pre
                }
                None => d_out,
            };
            let (d_x, d_w, d_b) =
                tconv_backward(g, &d_pre, &tape.dec_in[k], self.tensor(slots.weight));
            add_into(&mut grads.tensors_mut()[slots.weight], &d_w);
            add_into(&mut grads.tensors_mut()[slots.bias], &d_b);
            let split = d_x.len() - d_enc[depth - 1 - k].len();
            for (a, b) in d_enc[depth - 1 - k].iter_mut().zip(&d_x[split..]) {
                *a += b;
            }
            d_out = d_x[..split].to_vec();
        }

        let c_b = self.cfg.bottleneck_channels();
        let f_b = self.cfg.bottleneck_bins();
        let width = self.cfg.bottleneck_width();
        let h = self.cfg.lstm_hidden;
        let d_proj = to_frame_major(&d_out, c_b, frames, f_b);
        let mut d_wp = vec![0.0; width * h];
        gemm(
            width,
            frames,
            h,
            &d_proj,
            true,
            &tape.lstm_out,
            false,
            0.0,
            &mut d_wp,
        );
        add_into(&mut grads.tensors_mut()[self.layout.proj_weight], &d_wp);
        let mut d_bp = vec![0.0; width];
        for row in d_proj.chunks_exact(width) {
            for (a, b) in d_bp.iter_mut().zip(row) {
                *a += b;
            }
        }
        add_into(&mut grads.tensors_mut()[self.layout.proj_bias], &d_bp);
        let mut d_seq = vec![0.0; frames * h];
        gemm(
            frames,
            width,
            h,
            &d_proj,
            false,
            self.tensor(self.layout.proj_weight),
            false,
            0.0,
            &mut d_seq,
        );

        for l in (0..self.cfg.lstm_layers).rev() {
            let s = self.layout.lstm[l];
            let (d_x, d_ih, d_hh, d_b) = lstm_backward(
                self.lstm_weights(l),
                &tape.lstm_in[l],
                &tape.lstm_cache[l],
                &d_seq,
            );
            add_into(&mut grads.tensors_mut()[s.w_ih], &d_ih);
            add_into(&mut grads.tensors_mut()[s.w_hh], &d_hh);
            add_into(&mut grads.tensors_mut()[s.bias], &d_b);
            d_seq = d_x;
        }
        let d_bottleneck = to_channel_major(&d_seq, c_b, frames, f_b);
        for (a, b) in d_enc[depth - 1].iter_mut().zip(&d_bottleneck) {
            *a += b;
        }

        for i in (0..depth).rev() {
            let g = self.enc_geom(i, frames);
            let slots = self.layout.enc[i];
            let a = slots.alpha.expect("encoder layers have a slope");
            let (d_pre, d_alpha) = prelu_backward(&tape.enc_pre[i], self.scalar(a), &d_enc[i]);
            grads.tensors_mut()[a].data_mut()[0] += d_alpha;
            let (d_x, d_w, d_b) =
                conv_backward(g, &d_pre, &tape.enc_cols[i], self.tensor(slots.weight));
            add_into(&mut grads.tensors_mut()[slots.weight], &d_w);
            add_into(&mut grads.tensors_mut()[slots.bias], &d_b);
            if i > 0 {
                for (acc, v) in d_enc[i - 1].iter_mut().zip(&d_x) {
                    *acc += v;
                }
            }
        }
    }

    /// Masked estimate of the clean spectrum, from an all-zero state, with
    /// the values needed for [`Dctcrn::estimate_backward`]. With `clip`, the
    /// estimate is limited to the noisy magnitude per coefficient.
    pub fn estimate(
        &self,
        noisy: &DctSpectrogram,
        clip: bool,
    ) -> Result<(DctSpectrogram, EstimateTape)> {
        self.check_bins(noisy)?;
        let (logits, tape) = self.forward_train(noisy.data())?;
        let act = self.mask_activation();
        let shat_raw: Vec<f64> = logits
            .iter()
            .zip(noisy.data())
            .map(|(&l, &y)| act.apply(l) * y)
            .collect();
        let out: Vec<f64> = if clip {
            shat_raw
                .iter()
                .zip(noisy.data())
                .map(|(&s, &y)| clip_coefficient(s, y))
                .collect()
        } else {
            shat_raw.clone()
        };
        let shat = DctSpectrogram::from_vec(noisy.frames(), noisy.bins(), out)?;
        Ok((
            shat,
            EstimateTape {
                tape,
                logits,
                noisy: noisy.clone(),
                shat_raw,
                clip,
            },
        ))
    }

    /// Parameter gradients given the gradient of the estimate.
    pub fn estimate_backward(&self, et: &EstimateTape, d_shat: &[f64]) -> ParameterSet {
        let act = self.mask_activation();
        let mut grads = self.params.zeros_like();
        let mut d_mask_alpha = 0.0;
        let d_logits: Vec<f64> = et
            .logits
            .iter()
            .zip(et.noisy.data())
            .zip(d_shat)
            .zip(&et.shat_raw)
            .map(|(((&l, &y), &d), &s)| {
                if et.clip && s.abs() > y.abs() {
                    return 0.0;
                }
                let d_mask = d * y;
                if let MaskActivation::Prelu(_) = act {
                    if l <= 0.0 {
                        d_mask_alpha += d_mask * l;
                    }
                }
                d_mask * act.derivative(l, act.apply(l))
            })
            .collect();
        if let Some(i) = self.layout.mask_alpha {
            grads.tensors_mut()[i].data_mut()[0] += d_mask_alpha;
        }
        self.backward_into(&et.tape, &d_logits, &mut grads);
        grads
    }

    /// Masked estimate from an all-zero state, without recording anything.
    pub fn enhance_spectrogram(
        &self,
        noisy: &DctSpectrogram,
        clip: bool,
    ) -> Result<DctSpectrogram> {
        self.check_bins(noisy)?;
        let mut state = self.new_state();
        let logits = self.forward(noisy.data(), &mut state)?;
        let mut out = self.apply_logits(&logits, noisy.data());
        if clip {
            for (s, &y) in out.iter_mut().zip(noisy.data()) {
                *s = clip_coefficient(*s, y);
            }
        }
        DctSpectrogram::from_vec(noisy.frames(), noisy.bins(), out)
    }

    /// `act(logits) * y`, elementwise.
    pub fn apply_logits(&self, logits: &[f64], y: &[f64]) -> Vec<f64> {
        let act = self.mask_activation();
        logits
            .iter()
            .zip(y)
            .map(|(&l, &v)| act.apply(l) * v)
            .collect()
    }

    fn check_bins(&self, s: &DctSpectrogram) -> Result<()> {
        if s.bins() != self.bins() {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram has {} bins, model expects {}",
                s.bins(),
                self.bins()
            )));
        }
        Ok(())
    }
}

fn add_into(t: &mut super::tensor::Tensor, v: &[f64]) {
    for (a, b) in t.data_mut().iter_mut().zip(v) {
        *a += b;
    }
}

/// Last frame `[c, bins]` of a `[c, frames, bins]` map.
fn last_frame(x: &[f64], c: usize, frames: usize, bins: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(c * bins);
    for ci in 0..c {
        let start = (ci * frames + frames - 1) * bins;
        out.extend_from_slice(&x[start..start + bins]);
    }
    out
}

/// `[c, frames, bins] -> [frames, c * bins]`.
fn to_frame_major(x: &[f64], c: usize, frames: usize, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for t in 0..frames {
            out[(t * c + ci) * bins..][..bins]
                .copy_from_slice(&x[(ci * frames + t) * bins..][..bins]);
        }
    }
    out
}

/// `[frames, c * bins] -> [c, frames, bins]`.
fn to_channel_major(x: &[f64], c: usize, frames: usize, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for t in 0..frames {
            out[(ci * frames + t) * bins..][..bins]
                .copy_from_slice(&x[(t * c + ci) * bins..][..bins]);
        }
    }
    out
}
