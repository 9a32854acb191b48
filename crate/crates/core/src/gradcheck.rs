//! Central finite-difference checks of every hand-written gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::masking::{MaskActivation, MaskVariant};
use crate::nn::layers::{
    conv_backward, conv_forward, lstm_backward, lstm_forward, prelu_backward, prelu_forward,
    tconv_backward, tconv_forward, tconv_history, ConvGeom, LstmState, LstmWeights,
};
use crate::nn::{Dctcrn, ModelConfig};
use crate::objective::{si_snr, si_snr_grad, SiSnrOptions};
use crate::train::loss_and_grad;
use crate::transform::{DctSpectrogram, ShortTimeDct};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms. A central
/// difference with step 1e-5 on a loss of order 10 carries about 1e-10 of
/// rounding noise, which would dominate the ratio for smaller gradients.
pub const ABS_FLOOR: f64 = 1e-5;

/// Worst disagreement found for one quantity under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&CheckResult> {
        self.results
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.results.iter().all(|r| r.max_rel_err < tol)
    }

    pub fn failures(&self, tol: f64) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(move |r| !(r.max_rel_err < tol))
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Compares `analytic` with central differences of `f` around `x`.
pub fn compare<F: FnMut(&[f64]) -> f64>(x: &[f64], analytic: &[f64], mut f: F) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Values kept at least `margin` away from zero, so a PReLU kink is never
/// inside the finite-difference stencil.
fn away_from_zero(v: &mut [f64], margin: f64) {
    for x in v {
        if x.abs() < margin {
            *x = if *x < 0.0 { -margin } else { margin };
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn push(out: &mut Vec<CheckResult>, name: &str, seed: u64, n: usize, err: f64) {
    out.push(CheckResult {
        name: name.into(),
        seed,
        checked: n,
        max_rel_err: err,
    });
}

/// Encoder convolution followed by PReLU; loss is a random projection.
fn check_conv(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = [5, 3, 2][seed as usize % 3];
    let g = ConvGeom {
        c_in: rng.gen_range(1..=3),
        c_out: rng.gen_range(1..=3),
        frames: rng.gen_range(1..=4),
        bins: 2 * rng.gen_range(2..=4),
        taps,
    };
    let x = rand_vec(&mut rng, g.c_in * g.frames * g.bins, 1.0);
    let hist = rand_vec(&mut rng, g.c_in * g.bins, 1.0);
    let w = rand_vec(&mut rng, g.c_out * g.c_in * 2 * taps, 0.5);
    let b = rand_vec(&mut rng, g.c_out, 0.5);
    let alpha = rng.gen_range(0.1..0.5);
    let r = rand_vec(&mut rng, g.c_out * g.frames * g.bins / 2, 1.0);

    let loss = |x: &[f64], w: &[f64], b: &[f64], a: f64| {
        let (pre, _) = conv_forward(g, x, &hist, w, b);
        dot(&prelu_forward(&pre, a), &r)
    };
    let (pre, cols) = conv_forward(g, &x, &hist, &w, &b);
    if pre.iter().any(|v| v.abs() < 1e-3) {
        // Too close to the kink for a clean central difference; resample.
        return check_conv(seed.wrapping_add(1 << 32), out);
    }
    let (d_pre, d_alpha) = prelu_backward(&pre, alpha, &r);
    let (d_x, d_w, d_b) = conv_backward(g, &d_pre, &cols, &w);
    push(
        out,
        "conv.input",
        seed,
        x.len(),
        compare(&x, &d_x, |v| loss(v, &w, &b, alpha)),
    );
    push(
        out,
        "conv.weight",
        seed,
        w.len(),
        compare(&w, &d_w, |v| loss(&x, v, &b, alpha)),
    );
    push(
        out,
        "conv.bias",
        seed,
        b.len(),
        compare(&b, &d_b, |v| loss(&x, &w, v, alpha)),
    );
    push(
        out,
        "conv.slope",
        seed,
        1,
        compare(&[alpha], &[d_alpha], |v| loss(&x, &w, &b, v[0])),
    );
}

fn check_tconv(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7c0);
    let taps = [5, 3, 2][seed as usize % 3];
    let g = ConvGeom {
        c_in: rng.gen_range(1..=3),
        c_out: rng.gen_range(1..=3),
        frames: rng.gen_range(1..=4),
        bins: rng.gen_range(2..=4),
        taps,
    };
    let x = rand_vec(&mut rng, g.c_in * g.frames * g.bins, 1.0);
    let hist = rand_vec(&mut rng, g.c_in * g.bins, 1.0);
    let w = rand_vec(&mut rng, g.c_in * g.c_out * 2 * taps, 0.5);
    let b = rand_vec(&mut rng, g.c_out, 0.5);
    let alpha = rng.gen_range(0.1..0.5);
    let r = rand_vec(&mut rng, g.c_out * g.frames * g.bins * 2, 1.0);

    // The history projection is state, held fixed while the weights move.
    let z = tconv_history(g, &hist, &w);
    let loss = |x: &[f64], w: &[f64], b: &[f64], a: f64| {
        let (pre, _) = tconv_forward(g, x, &z, w, b);
        dot(&prelu_forward(&pre, a), &r)
    };
    let (pre, _) = tconv_forward(g, &x, &z, &w, &b);
    if pre.iter().any(|v| v.abs() < 1e-3) {
        return check_tconv(seed.wrapping_add(1 << 32), out);
    }
    let (d_pre, d_alpha) = prelu_backward(&pre, alpha, &r);
    let (d_x, d_w, d_b) = tconv_backward(g, &d_pre, &x, &w);
    push(
        out,
        "tconv.input",
        seed,
        x.len(),
        compare(&x, &d_x, |v| loss(v, &w, &b, alpha)),
    );
    push(
        out,
        "tconv.weight",
        seed,
        w.len(),
        compare(&w, &d_w, |v| loss(&x, v, &b, alpha)),
    );
    push(
        out,
        "tconv.bias",
        seed,
        b.len(),
        compare(&b, &d_b, |v| loss(&x, &w, v, alpha)),
    );
    push(
        out,
        "tconv.slope",
        seed,
        1,
        compare(&[alpha], &[d_alpha], |v| loss(&x, &w, &b, v[0])),
    );
}

fn check_lstm(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x157);
    let d = rng.gen_range(1..=4);
    let h = rng.gen_range(1..=4);
    let frames = rng.gen_range(1..=5);
    let x = rand_vec(&mut rng, frames * d, 1.0);
    let w_ih = rand_vec(&mut rng, 4 * h * d, 0.8);
    let w_hh = rand_vec(&mut rng, 4 * h * h, 0.8);
    let bias = rand_vec(&mut rng, 4 * h, 0.5);
    let init = LstmState {
        h: rand_vec(&mut rng, h, 0.5),
        c: rand_vec(&mut rng, h, 0.5),
    };
    let r = rand_vec(&mut rng, frames * h, 1.0);
    let loss = |x: &[f64], w_ih: &[f64], w_hh: &[f64], bias: &[f64]| {
        let w = LstmWeights {
            w_ih,
            w_hh,
            bias,
            input: d,
            hidden: h,
        };
        let (y, _) = lstm_forward(w, x, &mut init.clone(), false);
        dot(&y, &r)
    };
    let w = LstmWeights {
        w_ih: &w_ih,
        w_hh: &w_hh,
        bias: &bias,
        input: d,
        hidden: h,
    };
    let (_, cache) = lstm_forward(w, &x, &mut init.clone(), true);
    let (d_x, d_ih, d_hh, d_b) = lstm_backward(w, &x, &cache.expect("cache"), &r);
    push(
        out,
        "lstm.input",
        seed,
        x.len(),
        compare(&x, &d_x, |v| loss(v, &w_ih, &w_hh, &bias)),
    );
    push(
        out,
        "lstm.w_ih",
        seed,
        w_ih.len(),
        compare(&w_ih, &d_ih, |v| loss(&x, v, &w_hh, &bias)),
    );
    push(
        out,
        "lstm.w_hh",
        seed,
        w_hh.len(),
        compare(&w_hh, &d_hh, |v| loss(&x, &w_ih, v, &bias)),
    );
    push(
        out,
        "lstm.bias",
        seed,
        bias.len(),
        compare(&bias, &d_b, |v| loss(&x, &w_ih, &w_hh, v)),
    );
}

fn check_mask(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3a5c);
    let n = 16;
    let mut logits = rand_vec(&mut rng, n, 3.0);
    away_from_zero(&mut logits, 1e-3);
    let y = rand_vec(&mut rng, n, 1.0);
    let r = rand_vec(&mut rng, n, 1.0);
    let alpha = rng.gen_range(0.1..0.5);
    for act in [
        MaskActivation::Prelu(alpha),
        MaskActivation::Sigmoid,
        MaskActivation::Tanh,
    ] {
        let loss = |l: &[f64]| -> f64 {
            l.iter()
                .zip(&y)
                .zip(&r)
                .map(|((&l, &y), &r)| act.apply(l) * y * r)
                .sum()
        };
        let analytic: Vec<f64> = logits
            .iter()
            .zip(&y)
            .zip(&r)
            .map(|((&l, &y), &r)| act.derivative(l, act.apply(l)) * y * r)
            .collect();
        let name = match act {
            MaskActivation::Prelu(_) => "mask.prelu",
            MaskActivation::Sigmoid => "mask.sigmoid",
            _ => "mask.tanh",
        };
        push(out, name, seed, n, compare(&logits, &analytic, loss));
    }
}

/// Synthesis (inverse transform and overlap-add) against its adjoint, and
/// the SI-SNR gradient.
fn check_synthesis_and_loss(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157);
    let stdct = ShortTimeDct::new(crate::signal::FrameParams::new(8, 2)).expect("valid params");
    let len = rng.gen_range(3..=12);
    let frames = stdct.num_frames(len);
    let spec = rand_vec(&mut rng, frames * 8, 1.0);
    let r = rand_vec(&mut rng, len, 1.0);
    let synth = |v: &[f64]| {
        let s = DctSpectrogram::from_vec(frames, 8, v.to_vec()).expect("shape");
        dot(&stdct.synthesize(&s, len).expect("synthesis"), &r)
    };
    let adj = stdct.synthesize_adjoint(&r, frames).expect("adjoint");
    push(
        out,
        "synthesis",
        seed,
        spec.len(),
        compare(&spec, adj.data(), synth),
    );

    let s = rand_vec(&mut rng, 24, 1.0);
    let shat: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-0.7..0.7)).collect();
    for (name, literal) in [("si_snr", false), ("si_snr.literal", true)] {
        let opts = SiSnrOptions {
            literal_eq8: literal,
            ..Default::default()
        };
        let (_, g) = si_snr_grad(&shat, &s, &opts).expect("valid signals");
        let err = compare(&shat, &g, |v| si_snr(v, &s, &opts).expect("valid signals"));
        push(out, name, seed, shat.len(), err);
    }
}

/// Loss through the whole chain (analysis, model, mask, synthesis, SI-SNR)
/// with respect to every weight of the micro model.
fn check_end_to_end(seed: u64, out: &mut Vec<CheckResult>) {
    let variant = [MaskVariant::Prelu, MaskVariant::Sigmoid, MaskVariant::Tanh][seed as usize % 3];
    let cfg = ModelConfig::micro().with_variant(variant);
    let mut model = Dctcrn::init(cfg.clone(), seed).expect("micro config is valid");
    let stdct = ShortTimeDct::new(cfg.frame_params()).expect("valid params");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe2e);
    // Two hops of signal; with the analysis lead that is a handful of frames.
    let len = 2 * cfg.frame_params().hop;
    let clean = rand_vec(&mut rng, len, 1.0);
    let noisy: Vec<f64> = clean.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
    // Initialized slopes and biases sit exactly at kinks and symmetric
    // points; perturb every value so the check sees a generic point.
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let opts = SiSnrOptions::default();
    let (_, grads) = loss_and_grad(&model, &stdct, &noisy, &clean, &opts, false).expect("forward");
    let n_tensors = model.params().len();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for ti in 0..n_tensors {
        let x = model.params().tensors()[ti].data().to_vec();
        let analytic = grads.tensors()[ti].data().to_vec();
        let mut probe = model.clone();
        let err = compare(&x, &analytic, |v| {
            probe.params_mut().tensors_mut()[ti]
                .data_mut()
                .copy_from_slice(v);
            loss_and_grad(&probe, &stdct, &noisy, &clean, &opts, false)
                .expect("forward")
                .0
        });
        worst = worst.max(err);
        checked += x.len();
    }
    push(
        out,
        &format!("model.{}", variant.tag()),
        seed,
        checked,
        worst,
    );
}

/// Runs every check for each seed.
pub fn run_suite(seeds: impl IntoIterator<Item = u64>) -> GradcheckReport {
    let mut results = Vec::new();
    for seed in seeds {
        check_conv(seed, &mut results);
        check_tconv(seed, &mut results);
        check_lstm(seed, &mut results);
        check_mask(seed, &mut results);
        check_synthesis_and_loss(seed, &mut results);
        check_end_to_end(seed, &mut results);
    }
    GradcheckReport { results }
}
