//! Forward and backward kernels for the estimator's layers.
//!
//! Convolutions are two frames deep in time. Both the encoder convolution
//! and the decoder transposed convolution read the current input frame and
//! the one before it; the frame before the first comes from the caller's
//! history (zeros at the start of a stream, which is the same as padding one
//! zero frame in front). Frequency uses stride 2 with asymmetric zero padding so the
//! encoder exactly halves and the decoder exactly doubles the bin count.

use crate::linalg::{gemm, matvec};
use crate::masking::sigmoid;

/// Dimensions of one convolution-like layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub frames: usize,
    /// Input bins.
    pub bins: usize,
    /// Frequency taps.
    pub taps: usize,
}

impl ConvGeom {
    fn pad_left(&self) -> usize {
        (self.taps - 1) / 2
    }

    /// Rows of the unfolded input / columns of the flattened kernel.
    fn patch(&self) -> usize {
        self.c_in * 2 * self.taps
    }
}

/// Encoder convolution: `[c_in, T, F] -> [c_out, T, F/2]`, pre-activation.
///
/// `weight` is `[c_out, c_in, 2, taps]`; time tap 0 reads the previous frame,
/// tap 1 the current one. Returns the output and the unfolded input needed by
/// [`conv_backward`].
pub fn conv_forward(
    g: ConvGeom,
    x: &[f64],
    hist: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let f_out = g.bins / 2;
    let n = g.frames * f_out;
    let k = g.patch();
    assert_eq!(x.len(), g.c_in * g.frames * g.bins);
    assert_eq!(hist.len(), g.c_in * g.bins);
    assert_eq!(weight.len(), g.c_out * k);
    let mut cols = vec![0.0; k * n];
    let pl = g.pad_left() as isize;
    for ci in 0..g.c_in {
        for kt in 0..2 {
            for kf in 0..g.taps {
                let row = &mut cols[((ci * 2 + kt) * g.taps + kf) * n..][..n];
                for t in 0..g.frames {
                    let src = if kt == 0 {
                        if t == 0 {
                            &hist[ci * g.bins..(ci + 1) * g.bins]
                        } else {
                            &x[(ci * g.frames + t - 1) * g.bins..][..g.bins]
                        }
                    } else {
                        &x[(ci * g.frames + t) * g.bins..][..g.bins]
                    };
                    let dst = &mut row[t * f_out..(t + 1) * f_out];
                    for (fo, d) in dst.iter_mut().enumerate() {
                        let fi = 2 * fo as isize + kf as isize - pl;
                        if fi >= 0 && (fi as usize) < g.bins {
                            *d = src[fi as usize];
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![0.0; g.c_out * n];
    for (co, row) in out.chunks_exact_mut(n.max(1)).enumerate() {
        row.iter_mut().for_each(|v| *v = bias[co]);
    }
    gemm(g.c_out, k, n, weight, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

/// Gradients of [`conv_forward`]: `(d_input, d_weight, d_bias)`.
pub fn conv_backward(
    g: ConvGeom,
    d_out: &[f64],
    cols: &[f64],
    weight: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let f_out = g.bins / 2;
    let n = g.frames * f_out;
    let k = g.patch();
    let mut d_weight = vec![0.0; g.c_out * k];
    gemm(g.c_out, n, k, d_out, false, cols, true, 0.0, &mut d_weight);
    let d_bias = d_out
        .chunks_exact(n.max(1))
        .map(|r| r.iter().sum())
        .collect();
    let mut d_cols = vec![0.0; k * n];
    gemm(k, g.c_out, n, weight, true, d_out, false, 0.0, &mut d_cols);

    let mut d_x = vec![0.0; g.c_in * g.frames * g.bins];
    let pl = g.pad_left() as isize;
    for ci in 0..g.c_in {
        for kt in 0..2 {
            for kf in 0..g.taps {
                let row = &d_cols[((ci * 2 + kt) * g.taps + kf) * n..][..n];
                for t in 0..g.frames {
                    let src_t = if kt == 0 {
                        match t.checked_sub(1) {
                            Some(s) => s,
                            None => continue,
                        }
                    } else {
                        t
                    };
                    let dst = &mut d_x[(ci * g.frames + src_t) * g.bins..][..g.bins];
                    for (fo, &v) in row[t * f_out..(t + 1) * f_out].iter().enumerate() {
                        let fi = 2 * fo as isize + kf as isize - pl;
                        if fi >= 0 && (fi as usize) < g.bins {
                            dst[fi as usize] += v;
                        }
                    }
                }
            }
        }
    }
    (d_x, d_weight, d_bias)
}

/// Decoder transposed convolution: `[c_in, T, F] -> [c_out, T, 2F]`,
/// pre-activation, with the trailing output frame dropped.
///
/// `weight` is `[c_in, c_out, 2, taps]`; input frame `t` feeds output frame
/// `t` through time tap 0 and frame `t + 1` through tap 1. The previous
/// frame enters through `z_hist`, its per-tap projection (see
/// [`tconv_history`]), so it is not multiplied out again on every call.
/// Returns the output and the projection of the last input frame.
pub fn tconv_forward(
    g: ConvGeom,
    x: &[f64],
    z_hist: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = g.frames * g.bins;
    let m = g.c_out * 2 * g.taps;
    assert_eq!(x.len(), g.c_in * n);
    assert_eq!(z_hist.len(), m * g.bins);
    assert_eq!(weight.len(), g.c_in * m);
    let mut z = vec![0.0; m * n];
    gemm(m, g.c_in, n, weight, true, x, false, 0.0, &mut z);

    let f_out = 2 * g.bins;
    let pl = g.pad_left() as isize;
    let mut out = vec![0.0; g.c_out * g.frames * f_out];
    for co in 0..g.c_out {
        let dst = &mut out[co * g.frames * f_out..(co + 1) * g.frames * f_out];
        dst.iter_mut().for_each(|v| *v = bias[co]);
        for kt in 0..2 {
            for kf in 0..g.taps {
                let r = (co * 2 + kt) * g.taps + kf;
                for t in 0..g.frames {
                    let src = if t < kt {
                        &z_hist[r * g.bins..(r + 1) * g.bins]
                    } else {
                        &z[r * n + (t - kt) * g.bins..][..g.bins]
                    };
                    let row = &mut dst[t * f_out..(t + 1) * f_out];
                    for (fi, &v) in src.iter().enumerate() {
                        let fo = 2 * fi as isize + kf as isize - pl;
                        if fo >= 0 && (fo as usize) < f_out {
                            row[fo as usize] += v;
                        }
                    }
                }
            }
        }
    }
    let z_last = if g.frames == 0 {
        z_hist.to_vec()
    } else {
        let last = (g.frames - 1) * g.bins;
        z.chunks_exact(n)
            .flat_map(|row| &row[last..last + g.bins])
            .copied()
            .collect()
    };
    (out, z_last)
}

/// Per-tap projection `[c_out * 2 * taps, F]` of one input frame `[c_in, F]`.
pub fn tconv_history(g: ConvGeom, frame: &[f64], weight: &[f64]) -> Vec<f64> {
    let m = g.c_out * 2 * g.taps;
    let mut z = vec![0.0; m * g.bins];
    gemm(m, g.c_in, g.bins, weight, true, frame, false, 0.0, &mut z);
    z
}

/// Gradients of [`tconv_forward`]: `(d_input, d_weight, d_bias)`. The
/// history projection is treated as a constant.
pub fn tconv_backward(
    g: ConvGeom,
    d_out: &[f64],
    x: &[f64],
    weight: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = g.frames * g.bins;
    let m = g.c_out * 2 * g.taps;
    let f_out = 2 * g.bins;
    let pl = g.pad_left() as isize;
    let mut dz = vec![0.0; m * n];
    let mut d_bias = vec![0.0; g.c_out];
    for co in 0..g.c_out {
        let src = &d_out[co * g.frames * f_out..(co + 1) * g.frames * f_out];
        d_bias[co] = src.iter().sum();
        for kt in 0..2 {
            for kf in 0..g.taps {
                let zrow = &mut dz[((co * 2 + kt) * g.taps + kf) * n..][..n];
                for t in kt..g.frames {
                    let row = &src[t * f_out..(t + 1) * f_out];
                    let dst = &mut zrow[(t - kt) * g.bins..(t - kt + 1) * g.bins];
                    for (fi, d) in dst.iter_mut().enumerate() {
                        let fo = 2 * fi as isize + kf as isize - pl;
                        if fo >= 0 && (fo as usize) < f_out {
                            *d = row[fo as usize];
                        }
                    }
                }
            }
        }
    }
    let mut d_weight = vec![0.0; g.c_in * m];
    gemm(g.c_in, n, m, x, false, &dz, true, 0.0, &mut d_weight);
    let mut d_x = vec![0.0; g.c_in * n];
    gemm(g.c_in, m, n, weight, false, &dz, false, 0.0, &mut d_x);
    (d_x, d_weight, d_bias)
}

pub fn prelu_forward(pre: &[f64], alpha: f64) -> Vec<f64> {
    pre.iter()
        .map(|&x| if x > 0.0 { x } else { alpha * x })
        .collect()
}

/// `(d_pre, d_alpha)` of [`prelu_forward`].
pub fn prelu_backward(pre: &[f64], alpha: f64, d_out: &[f64]) -> (Vec<f64>, f64) {
    let mut d_alpha = 0.0;
    let d_pre = pre
        .iter()
        .zip(d_out)
        .map(|(&x, &d)| {
            if x > 0.0 {
                d
            } else {
                d_alpha += d * x;
                alpha * d
            }
        })
        .collect();
    (d_pre, d_alpha)
}

/// Hidden and cell vectors carried between LSTM steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Per-step values kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Activated gates `[T, 4H]` in order input, forget, candidate, output.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// LSTM weights borrowed from a parameter set: `w_ih` is `[4H, D]`, `w_hh`
/// is `[4H, H]`, one bias `[4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub bias: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

/// Runs `x` (`[T, D]`) through the layer from `state`, leaving the final
/// state in place. Returns the hidden sequence `[T, H]`.
pub fn lstm_forward(
    w: LstmWeights<'_>,
    x: &[f64],
    state: &mut LstmState,
    keep_cache: bool,
) -> (Vec<f64>, Option<LstmCache>) {
    let (d, h) = (w.input, w.hidden);
    let g4 = 4 * h;
    assert_eq!(x.len() % d.max(1), 0);
    let frames = if d == 0 { 0 } else { x.len() / d };
    // Input contributions row by row, so a frame's result does not depend on
    // how many frames share the call.
    let mut pre = vec![0.0; frames * g4];
    for (row, xt) in pre.chunks_exact_mut(g4).zip(x.chunks_exact(d)) {
        matvec(g4, d, w.w_ih, xt, 0.0, row);
    }
    let mut ys = vec![0.0; frames * h];
    let mut cache = keep_cache.then(|| LstmCache {
        gates: vec![0.0; frames * g4],
        c_prev: vec![0.0; frames * h],
        h_prev: vec![0.0; frames * h],
        tanh_c: vec![0.0; frames * h],
    });
    let mut rec = vec![0.0; g4];
    for t in 0..frames {
        matvec(g4, h, w.w_hh, &state.h, 0.0, &mut rec);
        let g = &mut pre[t * g4..(t + 1) * g4];
        for ((v, r), b) in g.iter_mut().zip(&rec).zip(w.bias) {
            *v += r + b;
        }
        for v in &mut g[..2 * h] {
            *v = sigmoid(*v);
        }
        for v in &mut g[2 * h..3 * h] {
            *v = v.tanh();
        }
        for v in &mut g[3 * h..] {
            *v = sigmoid(*v);
        }
        if let Some(cache) = cache.as_mut() {
            cache.c_prev[t * h..(t + 1) * h].copy_from_slice(&state.c);
            cache.h_prev[t * h..(t + 1) * h].copy_from_slice(&state.h);
        }
        for j in 0..h {
            let c = g[h + j] * state.c[j] + g[j] * g[2 * h + j];
            let tc = c.tanh();
            state.c[j] = c;
            state.h[j] = g[3 * h + j] * tc;
            if let Some(cache) = cache.as_mut() {
                cache.tanh_c[t * h + j] = tc;
            }
        }
        ys[t * h..(t + 1) * h].copy_from_slice(&state.h);
        if let Some(cache) = cache.as_mut() {
            cache.gates[t * g4..(t + 1) * g4].copy_from_slice(g);
        }
    }
    (ys, cache)
}

/// Gradients of an LSTM layer run from a fixed initial state:
/// `(d_x, d_w_ih, d_w_hh, d_bias)`.
pub fn lstm_backward(
    w: LstmWeights<'_>,
    x: &[f64],
    cache: &LstmCache,
    d_y: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (d, h) = (w.input, w.hidden);
    let g4 = 4 * h;
    let frames = d_y.len() / h;
    let mut d_gates = vec![0.0; frames * g4];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for t in (0..frames).rev() {
        let g = &cache.gates[t * g4..(t + 1) * g4];
        let dg = &mut d_gates[t * g4..(t + 1) * g4];
        for j in 0..h {
            let (i, f, c_hat, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tanh_c[t * h + j];
            let dh = d_y[t * h + j] + dh_next[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dg[j] = dc * c_hat * i * (1.0 - i);
            dg[h + j] = dc * cache.c_prev[t * h + j] * f * (1.0 - f);
            dg[2 * h + j] = dc * i * (1.0 - c_hat * c_hat);
            dg[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        // dh_prev = W_hh^T dg
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (row, &gv) in w.w_hh.chunks_exact(h).zip(dg.iter()) {
            for (acc, &wv) in dh_next.iter_mut().zip(row) {
                *acc += wv * gv;
            }
        }
    }
    let mut d_w_ih = vec![0.0; g4 * d];
    gemm(g4, frames, d, &d_gates, true, x, false, 0.0, &mut d_w_ih);
    let mut d_w_hh = vec![0.0; g4 * h];
    gemm(
        g4,
        frames,
        h,
        &d_gates,
        true,
        &cache.h_prev,
        false,
        0.0,
        &mut d_w_hh,
    );
    let mut d_bias = vec![0.0; g4];
    for row in d_gates.chunks_exact(g4) {
        for (a, b) in d_bias.iter_mut().zip(row) {
            *a += b;
        }
    }
    let mut d_x = vec![0.0; frames * d];
    gemm(frames, g4, d, &d_gates, false, w.w_ih, false, 0.0, &mut d_x);
    (d_x, d_w_ih, d_w_hh, d_bias)
}
