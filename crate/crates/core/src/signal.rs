//! Waveforms, WAV I/O, analysis/synthesis windows, framing and overlap-add.
//!
//! Framing follows the usual short-time layout: row `t` of a [`FrameMatrix`]
//! holds the windowed input samples `[t * hop, t * hop + frame_len)`, with the
//! tail zero-padded so that every input sample is covered. [`overlap_add`]
//! undoes the analysis exactly wherever a sample is covered by the full set
//! of `frame_len / hop` frames, by dividing through the constant overlap-add
//! sum of the analysis/synthesis window product.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// The only sample rate the engine accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wraps 16 kHz samples, rejecting NaN and infinities.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate: SAMPLE_RATE,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a mono 16 kHz WAV file holding 16-bit PCM or 32-bit float samples.
///
/// Integer samples are scaled by `1 / 32768`. No resampling or downmixing is
/// attempted; anything else is an error.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| Error::wav(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?}; expected 16-bit PCM or 32-bit float"
            )))
        }
    }
    .map_err(|e| Error::wav(path, e))?;
    Waveform::new(samples)
}

/// Quantizes a sample in the nominal `[-1, 1)` range to 16-bit PCM, clipping
/// anything outside it.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes `w` as 16-bit PCM mono 16 kHz.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::wav(path, e))?;
    for &s in w.samples() {
        writer
            .write_sample(quantize_pcm16(s))
            .map_err(|e| Error::wav(path, e))?;
    }
    writer.finalize().map_err(|e| Error::wav(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// Periodic (DFT-even) Hann.
    #[default]
    Hann,
    /// Square root of the periodic Hann window.
    SqrtHann,
}

/// Builds a window of length `n`.
pub fn make_window(kind: WindowKind, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "window length must be at least 2, got {n}"
        )));
    }
    let hann = (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()));
    Ok(match kind {
        WindowKind::Hann => hann.collect(),
        WindowKind::SqrtHann => hann.map(f64::sqrt).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameParams {
    pub frame_len: usize,
    pub hop: usize,
    pub analysis_window: WindowKind,
    pub synthesis_window: WindowKind,
}

impl Default for FrameParams {
    /// 32 ms Hann frames with an 8 ms hop.
    fn default() -> Self {
        Self::new(512, 128)
    }
}

impl FrameParams {
    pub fn new(frame_len: usize, hop: usize) -> Self {
        Self {
            frame_len,
            hop,
            analysis_window: WindowKind::Hann,
            synthesis_window: WindowKind::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.hop == 0 || self.frame_len % self.hop != 0 {
            return Err(Error::InvalidParameter(format!(
                "hop {} must be positive and divide frame length {} (>= 2)",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    /// Number of frames that overlap any given sample.
    pub fn overlap(&self) -> usize {
        self.frame_len / self.hop
    }

    pub fn num_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    pub fn analysis(&self) -> Result<Vec<f64>> {
        make_window(self.analysis_window, self.frame_len)
    }

    pub fn synthesis(&self) -> Result<Vec<f64>> {
        make_window(self.synthesis_window, self.frame_len)
    }
}

/// Overlap-add sum `sum_k wa(i + k hop) * ws(i + k hop)` at every phase
/// `i in 0..hop`.
pub fn overlap_sums(p: &FrameParams) -> Result<Vec<f64>> {
    p.validate()?;
    let wa = p.analysis()?;
    let ws = p.synthesis()?;
    Ok((0..p.hop)
        .map(|i| {
            (0..p.overlap())
                .map(|k| wa[i + k * p.hop] * ws[i + k * p.hop])
                .sum()
        })
        .collect())
}

/// The constant the synthesis stage divides by (1.5 for Hann/Hann at 75 %
/// overlap). Errors if the window pair is not constant-overlap-add.
pub fn cola_normalizer(p: &FrameParams) -> Result<f64> {
    let sums = overlap_sums(p)?;
    let norm = sums.iter().sum::<f64>() / sums.len() as f64;
    if sums
        .iter()
        .any(|s| (s - norm).abs() > 1e-9 * norm.abs().max(1.0))
        || norm <= 0.0
    {
        return Err(Error::InvalidParameter(
            "window pair is not constant-overlap-add at this hop".into(),
        ));
    }
    Ok(norm)
}

/// `frames x frame_len` real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    frames: usize,
    frame_len: usize,
    data: Vec<f64>,
}

impl FrameMatrix {
    pub fn zeros(frames: usize, frame_len: usize) -> Self {
        Self {
            frames,
            frame_len,
            data: vec![0.0; frames * frame_len],
        }
    }

    pub fn from_vec(frames: usize, frame_len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * frame_len {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {frames}x{frame_len} frames",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            frame_len,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.frame_len..(t + 1) * self.frame_len]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.frame_len..(t + 1) * self.frame_len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len.max(1))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Splits `signal` into windowed frames, `ceil(len / hop)` of them.
pub fn frame_signal(signal: &[f64], p: &FrameParams) -> Result<FrameMatrix> {
    p.validate()?;
    let window = p.analysis()?;
    let frames = p.num_frames(signal.len());
    let mut out = FrameMatrix::zeros(frames, p.frame_len);
    for t in 0..frames {
        let start = t * p.hop;
        let end = (start + p.frame_len).min(signal.len());
        let row = out.row_mut(t);
        for ((r, &x), &w) in row.iter_mut().zip(&signal[start..end]).zip(&window) {
            *r = x * w;
        }
    }
    Ok(out)
}

/// Synthesis-windowed overlap-add of `frames`, normalized by the
/// constant-overlap-add sum and truncated (or zero-extended) to `out_len`.
pub fn overlap_add(frames: &FrameMatrix, p: &FrameParams, out_len: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if frames.frame_len() != p.frame_len {
        return Err(Error::ShapeMismatch(format!(
            "frame length {} does not match params {}",
            frames.frame_len(),
            p.frame_len
        )));
    }
    let window = p.synthesis()?;
    let scale = 1.0 / cola_normalizer(p)?;
    let full = frames.frames().saturating_sub(1) * p.hop + p.frame_len;
    let mut out = vec![0.0; full.max(out_len)];
    for (t, row) in frames.rows().enumerate() {
        let seg = &mut out[t * p.hop..t * p.hop + p.frame_len];
        for ((o, &x), &w) in seg.iter_mut().zip(row).zip(&window) {
            *o += x * w * scale;
        }
    }
    out.truncate(out_len);
    Ok(out)
}

/// Transpose of [`overlap_add`] as a linear map from frames to samples:
/// gathers `grad` back into `frames` rows of synthesis-windowed segments.
pub fn overlap_add_adjoint(grad: &[f64], p: &FrameParams, frames: usize) -> Result<FrameMatrix> {
    p.validate()?;
    let window = p.synthesis()?;
    let scale = 1.0 / cola_normalizer(p)?;
    let mut out = FrameMatrix::zeros(frames, p.frame_len);
    for t in 0..frames {
        let start = t * p.hop;
        if start >= grad.len() {
            break;
        }
        let end = (start + p.frame_len).min(grad.len());
        for ((r, &g), &w) in out
            .row_mut(t)
            .iter_mut()
            .zip(&grad[start..end])
            .zip(&window)
        {
            *r = g * w * scale;
        }
    }
    Ok(out)
}
