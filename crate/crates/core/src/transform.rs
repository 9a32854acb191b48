//! Orthonormal DCT-II / DCT-III and the short-time cosine transform.
//!
//! The forward transform of a length-`N` vector is
//!
//! ```text
//! X[k] = c(k) * sqrt(2/N) * sum_n x[n] * cos(pi * k * (2n + 1) / (2N))
//! ```
//!
//! with `c(0) = sqrt(1/2)` and `c(k > 0) = 1`. The basis matrix is
//! orthonormal, so the inverse (DCT-III) is its transpose. Both directions
//! are evaluated directly from a precomputed cosine table; frame batches go
//! through a single matrix product.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::signal::{frame_signal, overlap_add, overlap_add_adjoint, FrameMatrix, FrameParams};

/// Precomputed orthonormal DCT-II basis for one transform length.
#[derive(Debug)]
pub struct DctPlan {
    n: usize,
    /// Row `k` holds basis function `k` sampled at `n = 0..N`.
    basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DCT length must be positive");
        let scale = (2.0 / n as f64).sqrt();
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let ck = if k == 0 { 0.5f64.sqrt() } else { 1.0 };
            for i in 0..n {
                let angle = PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64;
                basis[k * n + i] = ck * scale * angle.cos();
            }
        }
        Self { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The `N x N` DCT-II matrix, row-major.
    pub fn matrix(&self) -> &[f64] {
        &self.basis
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (o, row) in out.iter_mut().zip(self.basis.chunks_exact(self.n)) {
            *o = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        assert_eq!(coeffs.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&c, row) in coeffs.iter().zip(self.basis.chunks_exact(self.n)) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
    }

    /// Row-wise forward transform of a `rows x N` block.
    pub fn forward_rows(&self, rows: usize, input: &[f64], out: &mut [f64]) {
        gemm(
            rows,
            self.n,
            self.n,
            input,
            false,
            &self.basis,
            true,
            0.0,
            out,
        );
    }

    /// Row-wise inverse transform of a `rows x N` block.
    pub fn inverse_rows(&self, rows: usize, input: &[f64], out: &mut [f64]) {
        gemm(
            rows,
            self.n,
            self.n,
            input,
            false,
            &self.basis,
            false,
            0.0,
            out,
        );
    }
}

/// Shared plan for length `n`, built on first use.
pub fn plan(n: usize) -> Arc<DctPlan> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<DctPlan>>>> = OnceLock::new();
    let mut cache = PLANS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(DctPlan::new(n)))
        .clone()
}

pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if !x.is_empty() {
        plan(x.len()).forward(x, &mut out);
    }
    out
}

pub fn dct_iii(coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.len()];
    if !coeffs.is_empty() {
        plan(coeffs.len()).inverse(coeffs, &mut out);
    }
    out
}

/// `frames x bins` matrix of cosine-transform coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DctSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl DctSpectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            data: vec![0.0; frames * bins],
        }
    }

    pub fn from_vec(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {frames}x{bins} spectrogram",
                data.len()
            )));
        }
        Ok(Self { frames, bins, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub(crate) fn check_same_shape(&self, other: &DctSpectrogram) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Debug dump: `frames` and `bins` as little-endian u32, then row-major
    /// little-endian f32 values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.bins as u32).to_le_bytes())?;
        for &v in &self.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let frames = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let bins = u32::from_le_bytes(word) as usize;
        let mut data = Vec::with_capacity(frames * bins);
        for _ in 0..frames * bins {
            r.read_exact(&mut word)?;
            data.push(f32::from_le_bytes(word) as f64);
        }
        Ok(Self { frames, bins, data })
    }
}

/// Row-wise DCT-II of a frame matrix.
pub fn stdct(frames: &FrameMatrix) -> DctSpectrogram {
    let n = frames.frame_len();
    let mut out = DctSpectrogram::zeros(frames.frames(), n);
    if n > 0 && frames.frames() > 0 {
        plan(n).forward_rows(frames.frames(), frames.data(), &mut out.data);
    }
    out
}

/// Row-wise DCT-III, the exact inverse of [`stdct`].
pub fn istdct(spec: &DctSpectrogram) -> FrameMatrix {
    let n = spec.bins();
    let mut data = vec![0.0; spec.frames() * n];
    if n > 0 && spec.frames() > 0 {
        plan(n).inverse_rows(spec.frames(), spec.data(), &mut data);
    }
    FrameMatrix::from_vec(spec.frames(), n, data).expect("shape preserved")
}

/// Analysis/synthesis pair used by the enhancer and the trainer.
///
/// The signal is preceded by `frame_len - hop` zeros before framing, so every
/// real sample is covered by the full set of overlapping frames and the
/// round trip is exact over the whole signal. Frame `t` ends at input sample
/// `(t + 1) * hop`, which is what a streaming session sees after `t + 1`
/// hops.
#[derive(Debug, Clone)]
pub struct ShortTimeDct {
    params: FrameParams,
}

impl ShortTimeDct {
    pub fn new(params: FrameParams) -> Result<Self> {
        params.validate()?;
        crate::signal::cola_normalizer(&params)?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// Zero samples placed ahead of the signal.
    pub fn lead(&self) -> usize {
        self.params.frame_len - self.params.hop
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len == 0 {
            return 0;
        }
        self.params.num_frames(len + self.lead())
    }

    pub fn analyze(&self, signal: &[f64]) -> Result<DctSpectrogram> {
        if signal.is_empty() {
            return Ok(DctSpectrogram::zeros(0, self.params.frame_len));
        }
        let mut padded = vec![0.0; self.lead() + signal.len()];
        padded[self.lead()..].copy_from_slice(signal);
        Ok(stdct(&frame_signal(&padded, &self.params)?))
    }

    pub fn synthesize(&self, spec: &DctSpectrogram, len: usize) -> Result<Vec<f64>> {
        let frames = istdct(spec);
        let full = overlap_add(&frames, &self.params, self.lead() + len)?;
        Ok(full[self.lead()..].to_vec())
    }

    /// Transpose of [`ShortTimeDct::synthesize`]: maps a gradient on the
    /// output samples to a gradient on the `frames` spectrogram rows.
    pub fn synthesize_adjoint(&self, grad: &[f64], frames: usize) -> Result<DctSpectrogram> {
        let mut padded = vec![0.0; self.lead() + grad.len()];
        padded[self.lead()..].copy_from_slice(grad);
        let g = overlap_add_adjoint(&padded, &self.params, frames)?;
        // The inverse transform is the transpose of the forward one.
        Ok(stdct(&g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Independent evaluation of the defining sum.
    fn direct_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let c = if k == 0 { (0.5f64).sqrt() } else { 1.0 };
                c * (2.0 / n).sqrt()
                    * x.iter()
                        .enumerate()
                        .map(|(i, v)| {
                            v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
                        })
                        .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn constant_input() {
        let y = dct_ii(&[1.0; 4]);
        assert!((y[0] - 2.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
        let x = dct_iii(&[2.0, 0.0, 0.0, 0.0]);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn unit_impulse() {
        let y = dct_ii(&[1.0, 0.0, 0.0, 0.0]);
        let expect = [0.5, 0.65328, 0.5, 0.27060];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn matches_direct_sum() {
        for n in [1, 3, 8, 31] {
            let x = random(n as u64, n);
            for (a, b) in dct_ii(&x).iter().zip(direct_dct(&x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip() {
        for n in [1, 2, 4, 512] {
            let x = random(7 + n as u64, n);
            let back = dct_iii(&dct_ii(&x));
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_is_transpose() {
        let n = 16;
        let p = DctPlan::new(n);
        let m = p.matrix();
        let coeffs = random(3, n);
        let mut expect = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                expect[i] += m[k * n + i] * coeffs[k];
            }
        }
        for (a, b) in dct_iii(&coeffs).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_basis() {
        let n = 8;
        let p = DctPlan::new(n);
        let m = p.matrix();
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stdct_matches_direct_evaluation_at_512() {
        let frames = FrameMatrix::from_vec(3, 512, random(11, 3 * 512)).unwrap();
        let s = stdct(&frames);
        for t in 0..3 {
            let d = direct_dct(frames.row(t));
            let scale = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (a, b) in s.row(t).iter().zip(&d) {
                assert!((a - b).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn stdct_round_trip_and_parseval() {
        let frames = FrameMatrix::from_vec(5, 64, random(2, 5 * 64)).unwrap();
        let s = stdct(&frames);
        let back = istdct(&s);
        for (a, b) in frames.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        for t in 0..5 {
            let e1: f64 = frames.row(t).iter().map(|v| v * v).sum();
            let e2: f64 = s.row(t).iter().map(|v| v * v).sum();
            assert!((e1 - e2).abs() <= 1e-10 * e1);
        }
        let z = stdct(&FrameMatrix::zeros(2, 8));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_time_round_trip_is_exact_everywhere() {
        let st = ShortTimeDct::new(FrameParams::default()).unwrap();
        for len in [1, 127, 128, 1000, 16000] {
            let x = random(len as u64, len);
            let spec = st.analyze(&x).unwrap();
            assert_eq!(spec.frames(), st.num_frames(len));
            let y = st.synthesize(&spec, len).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn synthesis_adjoint_is_transpose() {
        let st = ShortTimeDct::new(FrameParams::new(8, 2)).unwrap();
        let len = 11;
        let frames = st.num_frames(len);
        let x = DctSpectrogram::from_vec(frames, 8, random(4, frames * 8)).unwrap();
        let y = random(5, len);
        let ax = st.synthesize(&x, len).unwrap();
        let aty = st.synthesize_adjoint(&y, frames).unwrap();
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn dump_round_trip() {
        let s = DctSpectrogram::from_vec(2, 3, vec![1.0, -2.5, 0.0, 3.25, 4.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(buf.len(), 8 + 6 * 4);
        assert_eq!(DctSpectrogram::read_dump(&buf[..]).unwrap(), s);
    }
}
