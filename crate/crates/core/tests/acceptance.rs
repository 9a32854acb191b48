//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dctcrn::datagen::{
    epoch_stream, mix_at_snr, synth_noise, synth_speechlike, DatasetManifest, MixSpec, NoiseKind,
};
use dctcrn::gradcheck::{run_suite, TOLERANCE};
use dctcrn::masking::{ideal_cosine_mask, MaskVariant};
use dctcrn::nn::layers::{
    conv_forward, lstm_forward, tconv_forward, tconv_history, ConvGeom, LstmState, LstmWeights,
};
use dctcrn::nn::{count_params, layer_report, Dctcrn, ModelConfig, ModelReport};
use dctcrn::objective::{si_snr, SiSnrOptions};
use dctcrn::signal::FrameParams;
use dctcrn::stream::{
    enhance_offline, enhance_streaming, rtf_benchmark, EnhancerSession, ModelMasker,
};
use dctcrn::train::{si_snr_before_after, train, TrainConfig};
use dctcrn::transform::{dct_ii, dct_iii, plan, ShortTimeDct};

type Outcome = Result<String, String>;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Orthonormal DCT-II straight from the cosine sum.
fn naive_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * (i as f64 + 0.5) * k as f64 / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

fn transform_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut round, mut parseval, mut ortho, mut naive) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in [1, 2, 4, 8, 64, 512] {
        for _ in 0..10 {
            let x = rand_vec(&mut rng, n);
            let c = dct_ii(&x);
            round = round.max(max_abs_diff(&dct_iii(&c), &x));
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            parseval = parseval.max((ex - ec).abs() / ex);
            naive = naive.max(max_abs_diff(&c, &naive_dct(&x)));
        }
        if n <= 64 {
            let m = plan(n).matrix().to_vec();
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    ortho = ortho.max((dot - want).abs());
                }
            }
        }
    }
    check(
        round < 1e-10 && ortho < 1e-12 && parseval < 1e-10 && naive < 1e-10,
        format!("roundtrip={round:.1e} orthonormality={ortho:.1e} parseval={parseval:.1e} vs_direct_sum={naive:.1e}"),
    )
}

fn stdct_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_vec(&mut rng, 160_000);
    let stdct = ShortTimeDct::new(FrameParams::default()).map_err(|e| e.to_string())?;
    let spec = stdct.analyze(&x).map_err(|e| e.to_string())?;
    let y = stdct
        .synthesize(&spec, x.len())
        .map_err(|e| e.to_string())?;
    let err: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let rel = err / norm;
    check(
        rel < 1e-10,
        format!("relative_l2={rel:.2e} frames={}", spec.frames()),
    )
}

fn oracle_mask_bound() -> Outcome {
    let stdct = ShortTimeDct::new(FrameParams::default()).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for (i, kind) in [NoiseKind::White, NoiseKind::Pink].into_iter().enumerate() {
        for seed in 0..4u64 {
            let run = || -> dctcrn::Result<f64> {
                let speech = synth_speechlike(seed, 3.0)?;
                let noise = synth_noise(kind, 100 + seed, 3.0)?;
                let mix = mix_at_snr(
                    speech.samples(),
                    noise.samples(),
                    &MixSpec::new(0.0, seed + 10 * i as u64),
                )?;
                let s = stdct.analyze(&mix.clean)?;
                let y = stdct.analyze(&mix.noisy)?;
                let shat = ideal_cosine_mask(&s, &y, 100.0)?.apply_to(&y)?;
                let out = stdct.synthesize(&shat, mix.noisy.len())?;
                si_snr(&out, &mix.clean, &SiSnrOptions::default())
            };
            worst = worst.min(run().map_err(|e| e.to_string())?);
        }
    }
    check(
        worst >= 40.0,
        format!("worst_si_snr_db={worst:.2} over 8 mixtures at 0 dB"),
    )
}

fn gradient_suite() -> Outcome {
    let report = run_suite(0..20);
    let worst = report.worst().ok_or("empty report")?;
    let failures = report.failures(TOLERANCE).count();
    check(
        report.passed(TOLERANCE),
        format!(
            "checks={} seeds=20 worst={:.2e} ({} seed {}) failures={failures}",
            report.results.len(),
            worst.max_rel_err,
            worst.name,
            worst.seed
        ),
    )
}

/// Frames before `t0` of a `[channels, frames, bins]` map.
fn channel_prefix(x: &[f64], channels: usize, frames: usize, bins: usize, t0: usize) -> Vec<f64> {
    (0..channels)
        .flat_map(|c| x[(c * frames) * bins..(c * frames + t0) * bins].to_vec())
        .collect()
}

fn perturb_from(
    rng: &mut ChaCha8Rng,
    x: &mut [f64],
    channels: usize,
    frames: usize,
    bins: usize,
    t0: usize,
) {
    for c in 0..channels {
        for v in &mut x[(c * frames + t0) * bins..(c + 1) * frames * bins] {
            *v += rng.gen_range(-3.0..3.0);
        }
    }
}

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 50;
    let frames = 12;
    let mut leaks = Vec::new();
    for trial in 0..trials {
        let t0 = rng.gen_range(0..frames);
        let g = ConvGeom {
            c_in: 2,
            c_out: 3,
            frames,
            bins: 16,
            taps: 5,
        };
        // Encoder convolution.
        let w = rand_vec(&mut rng, 3 * 2 * 2 * 5);
        let b = rand_vec(&mut rng, 3);
        let hist = rand_vec(&mut rng, 2 * 16);
        let x = rand_vec(&mut rng, 2 * frames * 16);
        let mut xp = x.clone();
        perturb_from(&mut rng, &mut xp, 2, frames, 16, t0);
        let (a, _) = conv_forward(g, &x, &hist, &w, &b);
        let (c, _) = conv_forward(g, &xp, &hist, &w, &b);
        if channel_prefix(&a, 3, frames, 8, t0) != channel_prefix(&c, 3, frames, 8, t0) {
            leaks.push(format!("conv trial {trial}"));
        }
        // Decoder transposed convolution.
        let w = rand_vec(&mut rng, 2 * 3 * 2 * 5);
        let prev = rand_vec(&mut rng, 2 * 16);
        let z = tconv_history(g, &prev, &w);
        let (a, _) = tconv_forward(g, &x, &z, &w, &b);
        let (c, _) = tconv_forward(g, &xp, &z, &w, &b);
        if channel_prefix(&a, 3, frames, 32, t0) != channel_prefix(&c, 3, frames, 32, t0) {
            leaks.push(format!("tconv trial {trial}"));
        }
        // LSTM.
        let (d, h) = (6, 4);
        let w_ih = rand_vec(&mut rng, 4 * h * d);
        let w_hh = rand_vec(&mut rng, 4 * h * h);
        let bias = rand_vec(&mut rng, 4 * h);
        let lw = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            input: d,
            hidden: h,
        };
        let xs = rand_vec(&mut rng, frames * d);
        let mut xsp = xs.clone();
        perturb_from(&mut rng, &mut xsp, 1, frames, d, t0);
        let (a, _) = lstm_forward(lw, &xs, &mut LstmState::zeros(h), false);
        let (c, _) = lstm_forward(lw, &xsp, &mut LstmState::zeros(h), false);
        if a[..t0 * h] != c[..t0 * h] {
            leaks.push(format!("lstm trial {trial}"));
        }
    }
    // Full model, every variant.
    for (i, variant) in [MaskVariant::Prelu, MaskVariant::Sigmoid, MaskVariant::Tanh]
        .into_iter()
        .enumerate()
    {
        let model = Dctcrn::init(ModelConfig::tiny().with_variant(variant), i as u64)
            .map_err(|e| e.to_string())?;
        let bins = model.bins();
        for trial in 0..trials {
            let t0 = rng.gen_range(0..frames);
            let y = rand_vec(&mut rng, frames * bins);
            let mut yp = y.clone();
            perturb_from(&mut rng, &mut yp, 1, frames, bins, t0);
            let a = model
                .forward(&y, &mut model.new_state())
                .map_err(|e| e.to_string())?;
            let c = model
                .forward(&yp, &mut model.new_state())
                .map_err(|e| e.to_string())?;
            if a[..t0 * bins] != c[..t0 * bins] {
                leaks.push(format!("model {variant:?} trial {trial}"));
            }
        }
    }
    check(
        leaks.is_empty(),
        format!("perturbations={} per layer, leaks={:?}", trials, leaks),
    )
}

fn streaming_equivalence() -> Outcome {
    let model = Arc::new(Dctcrn::init(ModelConfig::default(), 11).map_err(|e| e.to_string())?);
    let params = model.frame_params();
    let run = || -> dctcrn::Result<(f64, usize, usize)> {
        let speech = synth_speechlike(3, 10.0)?;
        let noise = synth_noise(NoiseKind::Babble, 4, 10.0)?;
        let mix = mix_at_snr(speech.samples(), noise.samples(), &MixSpec::new(0.0, 5))?;
        let mut session = EnhancerSession::new(ModelMasker::new(model.clone()), params)?;
        let mut first = 0;
        for (i, hop) in mix.noisy.chunks_exact(params.hop).enumerate() {
            if session.push_hop(hop)?.is_some() {
                first = (i + 1) * params.hop;
                break;
            }
        }
        session.reset();
        let (streamed, _) = enhance_streaming(&mut session, &mix.noisy)?;
        let offline = enhance_offline(
            &mut ModelMasker::new(model.clone()),
            params,
            &mix.noisy,
            true,
        )?;
        Ok((max_abs_diff(&streamed, &offline), first, streamed.len()))
    };
    let (diff, first, len) = run().map_err(|e| e.to_string())?;
    check(
        diff < 1e-5 && first == 640 && len == 160_000,
        format!("max_abs_diff={diff:.2e} first_output_samples={first} output_len={len}"),
    )
}

fn toy_training() -> Outcome {
    let run = || -> dctcrn::Result<(f64, f64, usize, f64, bool)> {
        let kind = NoiseKind::White;
        let train_set = DatasetManifest::synthetic(32, 1, kind, 1.0, (0.0, 0.0));
        let val_set = DatasetManifest::synthetic(8, 2, kind, 1.0, (0.0, 0.0));
        let test_set = DatasetManifest::synthetic(8, 3, kind, 1.0, (0.0, 0.0));
        let (model, history) = train(
            &TrainConfig::toy(0),
            &ModelConfig::tiny(),
            &train_set,
            &val_set,
        )?;
        let test: Vec<_> = epoch_stream(&test_set, 0)?.collect::<dctcrn::Result<_>>()?;
        let (before, after) = si_snr_before_after(&model, &test, true)?;

        let one = DatasetManifest::synthetic(1, 5, kind, 1.0, (0.0, 0.0));
        let (_, fit) = train(&TrainConfig::overfit(0), &ModelConfig::tiny(), &one, &one)?;
        let losses: Vec<f64> = fit.epochs.iter().map(|r| r.train_loss).collect();
        let monotone = losses.windows(2).skip(1).all(|w| w[1] < w[0]);
        let best = -fit.best().map(|r| r.val_loss).unwrap_or(f64::INFINITY);
        Ok((before, after, history.steps, best, monotone))
    };
    let (before, after, steps, fit_db, monotone) = run().map_err(|e| e.to_string())?;
    let gain = after - before;
    check(
        gain >= 5.0 && steps <= 2000 && fit_db >= 15.0 && monotone,
        format!(
            "held_out_gain_db={gain:.2} ({before:.2} -> {after:.2}) steps={steps} overfit_si_snr_db={fit_db:.2} monotone_after_epoch_2={monotone}"
        ),
    )
}

/// Per-layer parameter counts from the layer shapes alone.
fn closed_form_params(cfg: &ModelConfig) -> Vec<(String, usize)> {
    let taps = cfg.kernel.freq * cfg.kernel.time;
    let enc = &cfg.encoder_channels;
    let depth = enc.len();
    let mut rows = Vec::new();
    let mut c_in = 1;
    for (i, &c) in enc.iter().enumerate() {
        rows.push((format!("enc.{i}"), c * c_in * taps + c + 1));
        c_in = c;
    }
    let width = enc.last().copied().unwrap_or(1) * (cfg.input_bins >> depth);
    let h = cfg.lstm_hidden;
    for l in 0..cfg.lstm_layers {
        let d = if l == 0 { width } else { h };
        rows.push((format!("lstm.{l}"), 4 * h * (d + h) + 4 * h));
    }
    rows.push(("proj".into(), width * h + width));
    let mut prev = enc.last().copied().unwrap_or(1);
    for (k, &c) in cfg.decoder_channels.iter().enumerate() {
        let c_in = prev + enc[depth - 1 - k];
        let slope = usize::from(k + 1 < cfg.decoder_channels.len());
        rows.push((format!("dec.{k}"), c_in * c * taps + c + slope));
        prev = c;
    }
    if cfg.mask_variant == MaskVariant::Prelu {
        rows.push(("mask".into(), 1));
    }
    rows
}

fn accounting() -> Outcome {
    let cfg = ModelConfig::default();
    let total = count_params(&cfg);
    let report = ModelReport::new(&cfg).to_string();
    let mut mismatches = Vec::new();
    for c in [
        ModelConfig::default(),
        ModelConfig::tiny(),
        ModelConfig::micro(),
    ] {
        for v in [MaskVariant::Prelu, MaskVariant::Sigmoid, MaskVariant::Tanh] {
            let c = c.clone().with_variant(v);
            let got: Vec<(String, usize)> = layer_report(&c)
                .into_iter()
                .map(|r| (r.name, r.params))
                .collect();
            let want = closed_form_params(&c);
            if got != want {
                mismatches.push(format!("{v:?} {:?}", c.encoder_channels));
            }
            if count_params(&c) != want.iter().map(|r| r.1).sum::<usize>() {
                mismatches.push(format!("total {v:?}"));
            }
        }
    }
    let documents_delta = report.contains("delta_vs_2.86M=") && report.contains("bottleneck");
    check(
        (2_000_000..=4_000_000).contains(&total) && mismatches.is_empty() && documents_delta,
        format!(
            "default_params={total} delta_vs_2.86M={:+} per_layer_mismatches={mismatches:?}",
            total as i64 - 2_860_000
        ),
    )
}

fn real_time() -> Outcome {
    let model = Arc::new(Dctcrn::init(ModelConfig::default(), 0).map_err(|e| e.to_string())?);
    let stats = rtf_benchmark(model, 10.0, 1).map_err(|e| e.to_string())?;
    check(
        stats.rtf < 1.0 && stats.hop_p99_ms < 8.0,
        format!(
            "rtf={:.3} hop_mean_ms={:.3} hop_p99_ms={:.3}",
            stats.rtf, stats.hop_mean_ms, stats.hop_p99_ms
        ),
    )
}

/// Active power with the same rule as the library, written out separately.
fn oracle_active_power(x: &[f64]) -> f64 {
    let thr = 1e-4;
    let mut num = 0.0;
    let mut den = 0usize;
    let mut start = 0;
    while start < x.len() {
        let end = (start + 320).min(x.len());
        let e: f64 = x[start..end].iter().map(|v| v * v).sum();
        if e / (end - start) as f64 > thr {
            num += e;
            den += end - start;
        }
        start = end;
    }
    if den == 0 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    } else {
        num / den as f64
    }
}

fn mixing() -> Outcome {
    let mut worst = 0.0f64;
    let mut identity = true;
    let mut count = 0;
    for (i, kind) in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble]
        .into_iter()
        .enumerate()
    {
        let speech = synth_speechlike(20 + i as u64, 2.0).map_err(|e| e.to_string())?;
        let noise = synth_noise(kind, 30 + i as u64, 3.0).map_err(|e| e.to_string())?;
        for step in 0..=60 {
            let snr = -10.0 + 0.5 * step as f64;
            let m = mix_at_snr(speech.samples(), noise.samples(), &MixSpec::new(snr, step))
                .map_err(|e| e.to_string())?;
            // The activity threshold is absolute, so measure at the level
            // before the common peak scale was applied.
            let clean: Vec<f64> = m.clean.iter().map(|v| v / m.peak_scale).collect();
            let pn =
                m.scaled_noise.iter().map(|v| v * v).sum::<f64>() / m.scaled_noise.len() as f64;
            let pn = pn / (m.peak_scale * m.peak_scale);
            let measured = 10.0 * (oracle_active_power(&clean) / pn).log10();
            worst = worst.max((measured - snr).abs());
            identity &= m
                .noisy
                .iter()
                .zip(m.clean.iter().zip(&m.scaled_noise))
                .all(|(y, (s, n))| *y == s + n);
            count += 1;
        }
    }
    check(
        worst < 0.01 && identity,
        format!("mixtures={count} worst_snr_error_db={worst:.2e} exact_identity={identity}"),
    )
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "transform correctness",
            limit: Duration::from_secs(10),
            run: transform_correctness,
        },
        Criterion {
            id: 2,
            name: "stdct reconstruction",
            limit: Duration::from_secs(5),
            run: stdct_reconstruction,
        },
        Criterion {
            id: 3,
            name: "oracle mask bound",
            limit: Duration::from_secs(10),
            run: oracle_mask_bound,
        },
        Criterion {
            id: 4,
            name: "gradient suite",
            limit: Duration::from_secs(60),
            run: gradient_suite,
        },
        Criterion {
            id: 5,
            name: "causality",
            limit: Duration::from_secs(30),
            run: causality,
        },
        Criterion {
            id: 6,
            name: "streaming equivalence",
            limit: Duration::from_secs(30),
            run: streaming_equivalence,
        },
        Criterion {
            id: 7,
            name: "toy training",
            limit: Duration::from_secs(1800),
            run: toy_training,
        },
        Criterion {
            id: 8,
            name: "accounting",
            limit: Duration::from_secs(1),
            run: accounting,
        },
        Criterion {
            id: 9,
            name: "real time",
            limit: Duration::from_secs(60),
            run: real_time,
        },
        Criterion {
            id: 10,
            name: "mixing",
            limit: Duration::from_secs(5),
            run: mixing,
        },
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.2}s, limit {}s]",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
