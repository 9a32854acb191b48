//! Hop-by-hop causal enhancement, offline enhancement through the same
//! transforms, file enhancement and the real-time benchmark.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::datagen::{synth_noise, synth_speechlike, NoiseKind};
use crate::error::{Error, Result};
use crate::masking::{clip_coefficient, ideal_cosine_mask, DEFAULT_CLAMP};
use crate::nn::{Dctcrn, StreamState};
use crate::signal::{cola_normalizer, load_wav, save_wav, FrameParams, Waveform, SAMPLE_RATE};
use crate::transform::{plan, DctPlan, DctSpectrogram, ShortTimeDct};

/// Produces the clean-spectrum estimate for consecutive frames of noisy
/// coefficients, keeping whatever history it needs between calls.
pub trait FrameMasker {
    fn bins(&self) -> usize;

    /// Back to the start-of-stream state.
    fn reset(&mut self);

    /// `noisy` holds whole frames, row-major; returns the same shape.
    fn estimate(&mut self, noisy: &[f64]) -> Result<Vec<f64>>;
}

/// The trained estimator as a masker.
#[derive(Debug, Clone)]
pub struct ModelMasker {
    model: Arc<Dctcrn>,
    state: StreamState,
}

impl ModelMasker {
    pub fn new(model: Arc<Dctcrn>) -> Self {
        let state = model.new_state();
        Self { model, state }
    }

    pub fn model(&self) -> &Dctcrn {
        &self.model
    }
}

impl FrameMasker for ModelMasker {
    fn bins(&self) -> usize {
        self.model.bins()
    }

    fn reset(&mut self) {
        self.state = self.model.new_state();
    }

    fn estimate(&mut self, noisy: &[f64]) -> Result<Vec<f64>> {
        let logits = self.model.forward(noisy, &mut self.state)?;
        Ok(self.model.apply_logits(&logits, noisy))
    }
}

/// Applies the ideal cosine mask computed from a known clean signal. Frames
/// past the end of the clean spectrum get a zero mask.
#[derive(Debug, Clone)]
pub struct OracleMasker {
    clean: DctSpectrogram,
    clamp: f64,
    pos: usize,
}

impl OracleMasker {
    pub fn new(clean: &[f64], params: FrameParams, clamp: f64) -> Result<Self> {
        let clean = ShortTimeDct::new(params)?.analyze(clean)?;
        Ok(Self {
            clean,
            clamp,
            pos: 0,
        })
    }

    pub fn with_default_clamp(clean: &[f64], params: FrameParams) -> Result<Self> {
        Self::new(clean, params, DEFAULT_CLAMP)
    }
}

impl FrameMasker for OracleMasker {
    fn bins(&self) -> usize {
        self.clean.bins()
    }

    fn reset(&mut self) {
        self.pos = 0;
    }

    fn estimate(&mut self, noisy: &[f64]) -> Result<Vec<f64>> {
        let bins = self.bins();
        let frames = noisy.len() / bins;
        let mut clean = vec![0.0; noisy.len()];
        for t in 0..frames {
            if self.pos + t < self.clean.frames() {
                clean[t * bins..(t + 1) * bins].copy_from_slice(self.clean.row(self.pos + t));
            }
        }
        self.pos += frames;
        let s = DctSpectrogram::from_vec(frames, bins, clean)?;
        let y = DctSpectrogram::from_vec(frames, bins, noisy.to_vec())?;
        Ok(ideal_cosine_mask(&s, &y, self.clamp)?
            .apply_to(&y)?
            .into_data())
    }
}

fn clip_rows(shat: &mut [f64], noisy: &[f64]) {
    for (s, &y) in shat.iter_mut().zip(noisy) {
        *s = clip_coefficient(*s, y);
    }
}

/// Whole-signal enhancement with the same analysis, masking and synthesis
/// as a session. Output length equals input length.
pub fn enhance_offline<M: FrameMasker>(
    masker: &mut M,
    params: FrameParams,
    noisy: &[f64],
    clip: bool,
) -> Result<Vec<f64>> {
    let stdct = ShortTimeDct::new(params)?;
    let y = stdct.analyze(noisy)?;
    masker.reset();
    let mut shat = masker.estimate(y.data())?;
    if clip {
        clip_rows(&mut shat, y.data());
    }
    let shat = DctSpectrogram::from_vec(y.frames(), y.bins(), shat)?;
    stdct.synthesize(&shat, noisy.len())
}

/// Streaming enhancer: one hop in, at most one hop out.
///
/// The first hop of output is returned by the fifth push (frame length plus
/// one hop of input, 40 ms at the default framing); every later push returns
/// the next hop. Output hop `j` is the enhanced version of input hop `j`.
#[derive(Debug, Clone)]
pub struct EnhancerSession<M: FrameMasker> {
    masker: M,
    params: FrameParams,
    plan: Arc<DctPlan>,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    ring: Vec<f64>,
    ola: Vec<f64>,
    pending: Option<Vec<f64>>,
    frames_consumed: usize,
    pushed_hops: usize,
    emitted_hops: usize,
    clip: bool,
    frame_buf: Vec<f64>,
    coef_buf: Vec<f64>,
}

impl<M: FrameMasker> EnhancerSession<M> {
    pub fn new(masker: M, params: FrameParams) -> Result<Self> {
        params.validate()?;
        if masker.bins() != params.frame_len {
            return Err(Error::ShapeMismatch(format!(
                "masker expects {} bins, frames are {} samples",
                masker.bins(),
                params.frame_len
            )));
        }
        let scale = 1.0 / cola_normalizer(&params)?;
        let synthesis = params.synthesis()?.into_iter().map(|w| w * scale).collect();
        let n = params.frame_len;
        let mut s = Self {
            masker,
            params,
            plan: plan(n),
            analysis: params.analysis()?,
            synthesis,
            ring: vec![0.0; n],
            ola: vec![0.0; n],
            pending: None,
            frames_consumed: 0,
            pushed_hops: 0,
            emitted_hops: 0,
            clip: true,
            frame_buf: vec![0.0; n],
            coef_buf: vec![0.0; n],
        };
        s.reset();
        Ok(s)
    }

    /// Whether estimates are limited to the noisy magnitude (on by default).
    pub fn set_clip(&mut self, clip: bool) {
        self.clip = clip;
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn masker(&self) -> &M {
        &self.masker
    }

    pub fn frames_consumed(&self) -> usize {
        self.frames_consumed
    }

    /// Input samples needed before the first output.
    pub fn latency_samples(&self) -> usize {
        self.params.frame_len + self.params.hop
    }

    /// Frames whose first hop lies in the zero lead and is never emitted.
    fn lead_hops(&self) -> usize {
        self.params.frame_len / self.params.hop - 1
    }

    pub fn reset(&mut self) {
        self.masker.reset();
        self.ring.iter_mut().for_each(|v| *v = 0.0);
        self.ola.iter_mut().for_each(|v| *v = 0.0);
        self.pending = None;
        self.frames_consumed = 0;
        self.pushed_hops = 0;
        self.emitted_hops = 0;
    }

    /// Runs one frame over the current ring and returns the hop of output
    /// it completes.
    fn step(&mut self) -> Result<Vec<f64>> {
        let n = self.params.frame_len;
        let hop = self.params.hop;
        for ((f, &x), &w) in self
            .frame_buf
            .iter_mut()
            .zip(&self.ring)
            .zip(&self.analysis)
        {
            *f = x * w;
        }
        self.plan.forward(&self.frame_buf, &mut self.coef_buf);
        let mut shat = self.masker.estimate(&self.coef_buf)?;
        if self.clip {
            clip_rows(&mut shat, &self.coef_buf);
        }
        self.plan.inverse(&shat, &mut self.frame_buf);
        for ((o, &x), &w) in self
            .ola
            .iter_mut()
            .zip(&self.frame_buf)
            .zip(&self.synthesis)
        {
            *o += x * w;
        }
        let done = self.ola[..hop].to_vec();
        self.ola.copy_within(hop.., 0);
        self.ola[n - hop..].iter_mut().for_each(|v| *v = 0.0);
        self.frames_consumed += 1;
        Ok(done)
    }

    fn advance(&mut self, samples: &[f64]) -> Result<Option<Vec<f64>>> {
        let hop = self.params.hop;
        self.ring.copy_within(hop.., 0);
        let n = self.ring.len();
        self.ring[n - hop..].copy_from_slice(samples);
        let t = self.frames_consumed;
        let done = self.step()?;
        if t < self.lead_hops() {
            return Ok(None);
        }
        Ok(Some(done))
    }

    /// Feeds exactly one hop of input.
    pub fn push_hop(&mut self, samples: &[f64]) -> Result<Option<Vec<f64>>> {
        if samples.len() != self.params.hop {
            return Err(Error::ChunkSize {
                expected: self.params.hop,
                got: samples.len(),
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        self.pushed_hops += 1;
        let Some(done) = self.advance(samples)? else {
            return Ok(None);
        };
        let out = self.pending.replace(done);
        if out.is_some() {
            self.emitted_hops += 1;
        }
        Ok(out)
    }

    /// Returns every hop not yet emitted (one per pushed hop in total) and
    /// resets the session.
    pub fn flush(&mut self) -> Result<Vec<f64>> {
        let hop = self.params.hop;
        let mut out = Vec::new();
        if self.pushed_hops > 0 {
            let zeros = vec![0.0; hop];
            let mut completed: Vec<Vec<f64>> = self.pending.take().into_iter().collect();
            while self.emitted_hops + completed.len() < self.pushed_hops {
                if let Some(done) = self.advance(&zeros)? {
                    completed.push(done);
                }
            }
            for h in completed {
                out.extend(h);
            }
        }
        self.reset();
        Ok(out)
    }
}

/// Streams `noisy` through `session` (zero-padding the last hop) and returns
/// exactly `noisy.len()` samples, plus the time spent in each push.
pub fn enhance_streaming<M: FrameMasker>(
    session: &mut EnhancerSession<M>,
    noisy: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hop = session.params().hop;
    let mut out = Vec::with_capacity(noisy.len() + hop);
    let mut times = Vec::with_capacity(noisy.len() / hop + 1);
    let mut buf = vec![0.0; hop];
    for chunk in noisy.chunks(hop) {
        buf[..chunk.len()].copy_from_slice(chunk);
        buf[chunk.len()..].iter_mut().for_each(|v| *v = 0.0);
        let start = Instant::now();
        let r = session.push_hop(&buf)?;
        times.push(start.elapsed().as_secs_f64());
        if let Some(h) = r {
            out.extend(h);
        }
    }
    out.extend(session.flush()?);
    out.truncate(noisy.len());
    Ok((out, times))
}

/// Timing summary of a streaming run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceStats {
    pub samples: usize,
    pub hops: usize,
    pub audio_s: f64,
    pub compute_s: f64,
    pub rtf: f64,
    pub hop_mean_ms: f64,
    pub hop_p99_ms: f64,
    pub hop_max_ms: f64,
}

impl EnhanceStats {
    fn from_times(samples: usize, times: &[f64]) -> Self {
        let audio_s = samples as f64 / SAMPLE_RATE as f64;
        let compute_s: f64 = times.iter().sum();
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p99 = if sorted.is_empty() {
            0.0
        } else {
            let idx = ((sorted.len() as f64 * 0.99).ceil() as usize).clamp(1, sorted.len()) - 1;
            sorted[idx]
        };
        Self {
            samples,
            hops: times.len(),
            audio_s,
            compute_s,
            rtf: if audio_s > 0.0 {
                compute_s / audio_s
            } else {
                0.0
            },
            hop_mean_ms: if times.is_empty() {
                0.0
            } else {
                1e3 * compute_s / times.len() as f64
            },
            hop_p99_ms: 1e3 * p99,
            hop_max_ms: 1e3 * sorted.last().copied().unwrap_or(0.0),
        }
    }

    /// One `key=value` pair per line.
    pub fn to_key_values(&self) -> String {
        format!(
            "samples={}\nhops={}\naudio_s={:.3}\ncompute_s={:.4}\nrtf={:.4}\nhop_mean_ms={:.4}\nhop_p99_ms={:.4}\nhop_max_ms={:.4}\n",
            self.samples,
            self.hops,
            self.audio_s,
            self.compute_s,
            self.rtf,
            self.hop_mean_ms,
            self.hop_p99_ms,
            self.hop_max_ms
        )
    }
}

/// Enhances a WAV file hop by hop; the output has the input's length.
pub fn enhance_file(
    in_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    model: Arc<Dctcrn>,
) -> Result<EnhanceStats> {
    let input = load_wav(in_path)?;
    let params = model.frame_params();
    let mut session = EnhancerSession::new(ModelMasker::new(model), params)?;
    let (out, times) = enhance_streaming(&mut session, input.samples())?;
    save_wav(&Waveform::new(out)?, out_path)?;
    Ok(EnhanceStats::from_times(input.len(), &times))
}

/// Streams `seconds` of synthetic noisy speech through a fresh session and
/// reports the real-time factor and per-hop latency.
pub fn rtf_benchmark(model: Arc<Dctcrn>, seconds: f64, seed: u64) -> Result<EnhanceStats> {
    let speech = synth_speechlike(seed, seconds)?;
    let noise = synth_noise(NoiseKind::White, seed.wrapping_add(1), seconds)?;
    let noisy: Vec<f64> = speech
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(s, n)| s + 0.05 * n)
        .collect();
    let params = model.frame_params();
    let mut session = EnhancerSession::new(ModelMasker::new(model), params)?;
    // Warm caches and the allocator before timing.
    let hop = params.hop;
    for chunk in noisy.chunks_exact(hop).take(16) {
        session.push_hop(chunk)?;
    }
    session.reset();
    let (_, times) = enhance_streaming(&mut session, &noisy)?;
    Ok(EnhanceStats::from_times(noisy.len(), &times))
}
