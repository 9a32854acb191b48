//! Synthetic speech and noise, SNR-controlled mixing, and manifest-driven
//! dynamic mixing for training.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{load_wav, Waveform, SAMPLE_RATE};

/// Frames quieter than this (RMS, dBFS) do not count as active speech.
pub const ACTIVE_THRESHOLD_DB: f64 = -40.0;
/// Frame length for the activity decision (20 ms).
pub const ACTIVE_FRAME: usize = 320;
/// Peak level the mixture is scaled down to if it would exceed it.
pub const PEAK_LIMIT: f64 = 0.999;
/// Training SNRs are drawn uniformly from this range (dB).
pub const DEFAULT_SNR_RANGE: (f64, f64) = (-10.0, 20.0);

const SILENT_POWER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub snr_db: f64,
    /// Chooses the noise crop offset.
    pub seed: u64,
    pub speech_gain_db: f64,
}

impl MixSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            speech_gain_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
    pub scaled_noise: Vec<f64>,
    /// Gain applied to the noise crop.
    pub noise_gain: f64,
    /// Common factor applied by peak limiting (1 if none was needed).
    pub peak_scale: f64,
    /// SNR measured before peak limiting.
    pub achieved_snr_db: f64,
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Mean power over 20 ms frames whose RMS exceeds -40 dBFS; the whole-signal
/// power if no frame qualifies.
pub fn active_power(x: &[f64]) -> f64 {
    let threshold = 10f64.powf(ACTIVE_THRESHOLD_DB / 10.0);
    let (mut sum, mut count) = (0.0, 0usize);
    for frame in x.chunks(ACTIVE_FRAME) {
        let p = mean_square(frame);
        if p > threshold {
            sum += p * frame.len() as f64;
            count += frame.len();
        }
    }
    if count == 0 {
        mean_square(x)
    } else {
        sum / count as f64
    }
}

/// Scales a seeded crop of `noise` so that active speech power over noise
/// power equals `spec.snr_db`, adds it to `speech`, and limits the peak of
/// the result (applying the same factor to all three outputs).
pub fn mix_at_snr(speech: &[f64], noise: &[f64], spec: &MixSpec) -> Result<Mixture> {
    if !spec.snr_db.is_finite() || !spec.speech_gain_db.is_finite() {
        return Err(Error::InvalidParameter(
            "SNR and gain must be finite".into(),
        ));
    }
    if noise.len() < speech.len() {
        return Err(Error::LengthMismatch {
            left: speech.len(),
            right: noise.len(),
        });
    }
    let speech_gain = 10f64.powf(spec.speech_gain_db / 20.0);
    let clean: Vec<f64> = speech.iter().map(|v| v * speech_gain).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = rng.gen_range(0..=noise.len() - speech.len());
    let crop = &noise[offset..offset + speech.len()];

    let ps = active_power(&clean);
    if ps < SILENT_POWER {
        return Err(Error::SilentSignal {
            what: "speech",
            power: ps,
        });
    }
    let pn = mean_square(crop);
    if pn < SILENT_POWER {
        return Err(Error::SilentSignal {
            what: "noise",
            power: pn,
        });
    }
    let g = (ps / (pn * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let mut scaled_noise: Vec<f64> = crop.iter().map(|v| g * v).collect();
    let achieved_snr_db = 10.0 * (ps / mean_square(&scaled_noise)).log10();
    let mut clean = clean;
    let mut noisy: Vec<f64> = clean
        .iter()
        .zip(&scaled_noise)
        .map(|(s, n)| s + n)
        .collect();

    let peak = noisy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut peak_scale = 1.0;
    if peak > PEAK_LIMIT {
        peak_scale = PEAK_LIMIT / peak;
        clean.iter_mut().for_each(|v| *v *= peak_scale);
        scaled_noise.iter_mut().for_each(|v| *v *= peak_scale);
        // Re-add so that noisy == clean + scaled_noise holds bit for bit.
        noisy = clean
            .iter()
            .zip(&scaled_noise)
            .map(|(s, n)| s + n)
            .collect();
    }
    Ok(Mixture {
        noisy,
        clean,
        scaled_noise,
        noise_gain: g,
        peak_scale,
        achieved_snr_db,
    })
}

fn secs_to_samples(duration_s: f64) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    Ok(((duration_s * SAMPLE_RATE as f64).round() as usize).max(1))
}

/// Add a voiced segment of `len` samples at `out[start..]`.
fn voiced_segment(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let sr = SAMPLE_RATE as f64;
    let len = out.len();
    let f_start: f64 = rng.gen_range(90.0..260.0);
    let f_end: f64 = (f_start * rng.gen_range(0.75..1.3)).clamp(80.0, 300.0);
    let vibrato_rate = rng.gen_range(3.0..6.0);
    let vibrato_depth = rng.gen_range(0.0..0.03);
    let harmonics = rng.gen_range(3..=8);
    let tilt = rng.gen_range(0.6..1.4);
    let amps: Vec<f64> = (1..=harmonics)
        .map(|k| rng.gen_range(0.5..1.0) / (k as f64).powf(tilt))
        .collect();
    let phases: Vec<f64> = (0..harmonics)
        .map(|_| rng.gen_range(0.0..2.0 * PI))
        .collect();
    let syllable_rate = rng.gen_range(2.0..5.0);
    let mut phase = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let u = i as f64 / len as f64;
        let t = i as f64 / sr;
        let f0 = (f_start + (f_end - f_start) * u)
            * (1.0 + vibrato_depth * (2.0 * PI * vibrato_rate * t).sin());
        phase += 2.0 * PI * f0 / sr;
        let env = (PI * u).sin().powi(2) * (0.65 + 0.35 * (2.0 * PI * syllable_rate * t).sin());
        let v: f64 = amps
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
            .sum();
        *o = env * v;
    }
}

/// Deterministic speech stand-in: voiced stretches of 0.3-0.8 s (3-8
/// harmonics of a drifting 80-300 Hz fundamental under a syllable-rate
/// envelope) separated by silent gaps of 0.12-0.3 s. RMS is set to a seeded
/// value in [0.05, 0.15].
pub fn synth_speechlike(seed: u64, duration_s: f64) -> Result<Waveform> {
    let n = secs_to_samples(duration_s)?;
    let sr = SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut pos = (rng.gen_range(0.02..0.15) * sr) as usize;
    while pos < n {
        let voiced = (rng.gen_range(0.3..0.8) * sr) as usize;
        let end = (pos + voiced).min(n);
        voiced_segment(&mut rng, &mut x[pos..end]);
        pos = end + (rng.gen_range(0.12..0.3) * sr) as usize;
    }
    let rms = mean_square(&x).sqrt();
    if rms > 0.0 {
        let target = rng.gen_range(0.05..0.15);
        x.iter_mut().for_each(|v| *v *= target / rms);
    }
    Waveform::new(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Babble,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "white" => Some(Self::White),
            "pink" => Some(Self::Pink),
            "babble" | "babble-like" => Some(Self::Babble),
            _ => None,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::White => "white",
            Self::Pink => "pink",
            Self::Babble => "babble",
        })
    }
}

fn unit_variance(mut x: Vec<f64>) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let sd = mean_square(&x).sqrt();
    if sd > 0.0 {
        x.iter_mut().for_each(|v| *v /= sd);
    }
    x
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Zero-mean, unit-variance noise, deterministic per seed.
pub fn synth_noise(kind: NoiseKind, seed: u64, duration_s: f64) -> Result<Waveform> {
    let n = secs_to_samples(duration_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = match kind {
        NoiseKind::White => gaussian(&mut rng, n),
        NoiseKind::Pink => {
            let mut spec: Vec<Complex<f64>> = gaussian(&mut rng, n)
                .into_iter()
                .map(|v| Complex::new(v, 0.0))
                .collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut spec);
            // Power falls as 1/f: amplitude 1/sqrt(f), symmetric in k.
            for (k, c) in spec.iter_mut().enumerate() {
                let kk = k.min(n - k);
                *c = if kk == 0 {
                    Complex::new(0.0, 0.0)
                } else {
                    *c / (kk as f64).sqrt()
                };
            }
            planner.plan_fft_inverse(n).process(&mut spec);
            spec.into_iter().map(|c| c.re).collect()
        }
        NoiseKind::Babble => {
            let voices = 6;
            let mut acc = vec![0.0; n];
            for _ in 0..voices {
                let v = synth_speechlike(rng.gen(), duration_s)?;
                for (a, b) in acc.iter_mut().zip(v.samples()) {
                    *a += b;
                }
            }
            acc
        }
    };
    Waveform::new(unit_variance(x))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpeechSource {
    File(PathBuf),
    Synth { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    File(PathBuf),
    Synth { kind: NoiseKind, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestItem {
    pub speech: SpeechSource,
    pub noise: NoiseSource,
}

/// Speech/noise pairs plus the mixing parameters of a dataset.
///
/// Text form, one item per line:
/// `speech=<path|synth:SEED>\tnoise=<path|synth:KIND:SEED>`. Optional
/// header lines `seed=N`, `duration=SECONDS` (crop or synthesis length) and
/// `snr_range=LO,HI` set the dataset parameters; `#` starts a comment.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
    pub seed: u64,
    pub duration_s: f64,
    pub snr_range: (f64, f64),
}

impl DatasetManifest {
    /// `n` synthetic items with distinct speech and noise seeds.
    pub fn synthetic(
        n: usize,
        seed: u64,
        kind: NoiseKind,
        duration_s: f64,
        snr_range: (f64, f64),
    ) -> Self {
        let items = (0..n as u64)
            .map(|i| ManifestItem {
                speech: SpeechSource::Synth {
                    seed: mix_seed(seed, 1, i),
                },
                noise: NoiseSource::Synth {
                    kind,
                    seed: mix_seed(seed, 2, i),
                },
            })
            .collect();
        Self {
            items,
            seed,
            duration_s,
            snr_range,
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m = Self {
            items: Vec::new(),
            seed: 0,
            duration_s: 4.0,
            snr_range: DEFAULT_SNR_RANGE,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Manifest { line: line_no, msg };
            if !line.contains('\t') {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
                match key.trim() {
                    "seed" => {
                        m.seed = value
                            .trim()
                            .parse()
                            .map_err(|_| err(format!("bad seed `{value}`")))?
                    }
                    "duration" => {
                        m.duration_s = value
                            .trim()
                            .parse()
                            .ok()
                            .filter(|d: &f64| *d > 0.0)
                            .ok_or_else(|| err(format!("bad duration `{value}`")))?
                    }
                    "snr_range" => {
                        let parsed = value
                            .split_once(',')
                            .and_then(|(a, b)| {
                                Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
                            })
                            .filter(|(a, b): &(f64, f64)| a <= b);
                        m.snr_range =
                            parsed.ok_or_else(|| err(format!("bad snr_range `{value}`")))?;
                    }
                    other => return Err(err(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let mut speech = None;
            let mut noise = None;
            for field in line.split('\t') {
                let (key, value) = field
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got `{field}`")))?;
                match key.trim() {
                    "speech" => speech = Some(parse_speech(value.trim(), base_dir).map_err(err)?),
                    "noise" => noise = Some(parse_noise(value.trim(), base_dir).map_err(err)?),
                    other => return Err(err(format!("unknown field `{other}`"))),
                }
            }
            match (speech, noise) {
                (Some(speech), Some(noise)) => m.items.push(ManifestItem { speech, noise }),
                _ => return Err(err("an item needs both speech= and noise=".into())),
            }
        }
        if m.items.is_empty() {
            return Err(Error::EmptyManifest);
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "seed={}\nduration={}\nsnr_range={},{}\n",
            self.seed, self.duration_s, self.snr_range.0, self.snr_range.1
        );
        for item in &self.items {
            let speech = match &item.speech {
                SpeechSource::File(p) => p.display().to_string(),
                SpeechSource::Synth { seed } => format!("synth:{seed}"),
            };
            let noise = match &item.noise {
                NoiseSource::File(p) => p.display().to_string(),
                NoiseSource::Synth { kind, seed } => format!("synth:{kind}:{seed}"),
            };
            out.push_str(&format!("speech={speech}\tnoise={noise}\n"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn resolve(value: &str, base: &Path) -> std::result::Result<PathBuf, String> {
    let p = base.join(value);
    if !p.is_file() {
        return Err(format!("file not found: {}", p.display()));
    }
    Ok(p)
}

fn parse_speech(value: &str, base: &Path) -> std::result::Result<SpeechSource, String> {
    match value.strip_prefix("synth:") {
        Some(seed) => seed
            .parse()
            .map(|seed| SpeechSource::Synth { seed })
            .map_err(|_| format!("bad speech seed `{seed}`")),
        None => resolve(value, base).map(SpeechSource::File),
    }
}

fn parse_noise(value: &str, base: &Path) -> std::result::Result<NoiseSource, String> {
    match value.strip_prefix("synth:") {
        Some(rest) => {
            let (kind, seed) = rest
                .split_once(':')
                .ok_or_else(|| format!("expected synth:KIND:SEED, got `{value}`"))?;
            let kind =
                NoiseKind::parse(kind).ok_or_else(|| format!("unknown noise kind `{kind}`"))?;
            let seed = seed
                .parse()
                .map_err(|_| format!("bad noise seed `{seed}`"))?;
            Ok(NoiseSource::Synth { kind, seed })
        }
        None => resolve(value, base).map(NoiseSource::File),
    }
}

/// SplitMix64 finalizer over three inputs; independent streams per
/// (dataset seed, epoch, item).
pub fn mix_seed(seed: u64, epoch: u64, item: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ epoch) ^ item)
}

/// One dynamically mixed training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPair {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
    /// Target SNR.
    pub snr_db: f64,
    /// SNR measured after mixing.
    pub achieved_snr_db: f64,
    pub seed: u64,
}

fn tile(x: &[f64], len: usize) -> Vec<f64> {
    x.iter().copied().cycle().take(len).collect()
}

/// Mixes item `index` of `manifest` for `epoch`. Every random choice (speech
/// crop, noise crop, SNR) derives from the item seed alone.
pub fn mix_item(manifest: &DatasetManifest, epoch: u64, index: usize) -> Result<MixedPair> {
    let item = manifest
        .items
        .get(index)
        .ok_or_else(|| Error::InvalidParameter(format!("item {index} out of range")))?;
    let seed = mix_seed(manifest.seed, epoch, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = secs_to_samples(manifest.duration_s)?;
    let speech = match &item.speech {
        SpeechSource::Synth { seed } => {
            synth_speechlike(*seed, manifest.duration_s)?.into_samples()
        }
        SpeechSource::File(p) => {
            let w = load_wav(p)?.into_samples();
            if w.len() > len {
                let off = rng.gen_range(0..=w.len() - len);
                w[off..off + len].to_vec()
            } else {
                w
            }
        }
    };
    // A second of slack so the noise crop moves between epochs.
    let noise_len = speech.len() + SAMPLE_RATE as usize;
    let noise = match &item.noise {
        NoiseSource::Synth { kind, seed } => {
            synth_noise(*kind, *seed, noise_len as f64 / SAMPLE_RATE as f64)?.into_samples()
        }
        NoiseSource::File(p) => {
            let w = load_wav(p)?.into_samples();
            if w.len() < speech.len() {
                tile(&w, speech.len())
            } else {
                w
            }
        }
    };
    let (lo, hi) = manifest.snr_range;
    let snr_db = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mix = mix_at_snr(&speech, &noise, &MixSpec::new(snr_db, rng.gen()))?;
    Ok(MixedPair {
        noisy: mix.noisy,
        clean: mix.clean,
        snr_db,
        achieved_snr_db: mix.achieved_snr_db,
        seed,
    })
}

/// The pairs of one epoch, in manifest order.
pub fn epoch_stream(
    manifest: &DatasetManifest,
    epoch: u64,
) -> Result<impl Iterator<Item = Result<MixedPair>> + '_> {
    if manifest.items.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok((0..manifest.items.len()).map(move |i| mix_item(manifest, epoch, i)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, f: f64, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / SAMPLE_RATE as f64).sin())
            .collect()
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_gain() {
        let s = sine(16000, 440.0, 0.3);
        let n = sine(16000, 1234.0, 0.3);
        let m = mix_at_snr(&s, &n, &MixSpec::new(0.0, 1)).unwrap();
        assert!((m.noise_gain - 1.0).abs() < 1e-9, "{}", m.noise_gain);
    }

    #[test]
    fn achieved_snr_and_identity() {
        let s = synth_speechlike(3, 2.0).unwrap();
        let n = synth_noise(NoiseKind::Pink, 4, 3.0).unwrap();
        for snr in [-10.0, -3.5, 0.0, 6.0, 20.0] {
            let m = mix_at_snr(s.samples(), n.samples(), &MixSpec::new(snr, 9)).unwrap();
            assert!((m.achieved_snr_db - snr).abs() < 0.01);
            for ((y, c), v) in m.noisy.iter().zip(&m.clean).zip(&m.scaled_noise) {
                assert_eq!(*y, c + v);
            }
            assert!(m.noisy.iter().all(|v| v.abs() <= PEAK_LIMIT + 1e-12));
        }
    }

    #[test]
    fn silent_inputs_are_rejected() {
        let z = vec![0.0; 1000];
        let n = sine(1000, 100.0, 0.5);
        assert!(matches!(
            mix_at_snr(&z, &n, &MixSpec::new(0.0, 1)),
            Err(Error::SilentSignal { what: "speech", .. })
        ));
        assert!(matches!(
            mix_at_snr(&n, &z, &MixSpec::new(0.0, 1)),
            Err(Error::SilentSignal { what: "noise", .. })
        ));
        assert!(mix_at_snr(&n, &n[..10], &MixSpec::new(0.0, 1)).is_err());
    }

    #[test]
    fn speechlike_contract() {
        let a = synth_speechlike(7, 4.0).unwrap();
        assert_eq!(a, synth_speechlike(7, 4.0).unwrap());
        assert_ne!(a, synth_speechlike(8, 4.0).unwrap());
        let rms = mean_square(a.samples()).sqrt();
        assert!((0.02..=0.5).contains(&rms), "{rms}");
        // Longest run of exact zeros must reach 100 ms.
        let mut run = 0;
        let mut best = 0;
        for &v in a.samples() {
            run = if v == 0.0 { run + 1 } else { 0 };
            best = best.max(run);
        }
        assert!(best >= 1600, "{best}");
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let w = synth_noise(NoiseKind::White, 1, 4.0).unwrap();
        let x = w.samples();
        assert_eq!(x.len(), 64000);
        assert!((mean_square(x) - 1.0).abs() < 1e-9);
        for lag in 1..5 {
            let r: f64 = x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64;
            assert!(r.abs() < 0.05, "lag {lag}: {r}");
        }
        assert_eq!(w, synth_noise(NoiseKind::White, 1, 4.0).unwrap());
    }

    #[test]
    fn pink_noise_slope() {
        let w = synth_noise(NoiseKind::Pink, 2, 4.0).unwrap();
        let x = w.samples();
        let n = x.len();
        let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        // Octave bands from 100 Hz to 3200 Hz, least-squares slope in dB/octave.
        let hz_per_bin = SAMPLE_RATE as f64 / n as f64;
        let mut pts = Vec::new();
        let mut lo = 100.0;
        while lo * 2.0 <= 4000.0 {
            let (a, b) = ((lo / hz_per_bin) as usize, (2.0 * lo / hz_per_bin) as usize);
            let p = spec[a..b].iter().map(|c| c.norm_sqr()).sum::<f64>() / (b - a) as f64;
            pts.push(((lo * 1.5f64).log2(), 10.0 * p.log10()));
            lo *= 2.0;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 3.0).abs() < 1.0, "{slope}");
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let m = DatasetManifest::synthetic(3, 5, NoiseKind::Babble, 1.5, (0.0, 0.0));
        let back = DatasetManifest::parse(&m.to_text(), Path::new(".")).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            DatasetManifest::parse("# nothing\n", Path::new(".")),
            Err(Error::EmptyManifest)
        ));
        match DatasetManifest::parse("speech=synth:1\tnoise=synth:purple:2\n", Path::new(".")) {
            Err(Error::Manifest { line: 1, msg }) => assert!(msg.contains("purple")),
            other => panic!("{other:?}"),
        }
        assert!(DatasetManifest::parse(
            "speech=missing.wav\tnoise=synth:white:1\n",
            Path::new("/nonexistent")
        )
        .is_err());
    }

    #[test]
    fn epochs_are_reproducible_and_distinct() {
        let m = DatasetManifest::synthetic(2, 11, NoiseKind::White, 0.5, DEFAULT_SNR_RANGE);
        let e3: Vec<_> = epoch_stream(&m, 3).unwrap().map(Result::unwrap).collect();
        let again: Vec<_> = epoch_stream(&m, 3).unwrap().map(Result::unwrap).collect();
        let e4: Vec<_> = epoch_stream(&m, 4).unwrap().map(Result::unwrap).collect();
        assert_eq!(e3, again);
        assert_ne!(e3[0].noisy, e4[0].noisy);
        assert_ne!(e3[0].snr_db, e4[0].snr_db);
        assert!(e3.iter().all(|p| (-10.0..20.0).contains(&p.snr_db)));
    }
}
