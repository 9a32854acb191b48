use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use dctcrn::datagen::{epoch_stream, DatasetManifest, NoiseKind};
use dctcrn::gradcheck::{run_suite, TOLERANCE};
use dctcrn::masking::MaskVariant;
use dctcrn::nn::{load_weights_for, save_weights, Dctcrn, ModelConfig, ModelReport};
use dctcrn::objective::{si_snr, snr_metric, SiSnrOptions};
use dctcrn::signal::{load_wav, save_wav, Waveform};
use dctcrn::stream::{enhance_file, rtf_benchmark};
use dctcrn::train::{si_snr_before_after, train_with_progress, TrainConfig};
use dctcrn::{Error, Result};

#[derive(Parser)]
#[command(name = "dctcrn", version, about = "Cosine-domain speech enhancement")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// `default`, `tiny`, `micro` or a JSON file.
    #[arg(long, default_value = "default")]
    config: String,
    /// Mask activation: p (PReLU), s (sigmoid) or t (tanh).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<MaskVariant>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig::from_name_or_path(&self.config)?;
        Ok(match self.variant {
            Some(v) => cfg.with_variant(v),
            None => cfg,
        })
    }
}

fn parse_variant(s: &str) -> std::result::Result<MaskVariant, String> {
    MaskVariant::parse(s).ok_or_else(|| format!("unknown variant `{s}` (expected p, s or t)"))
}

fn parse_noise(s: &str) -> std::result::Result<NoiseKind, String> {
    NoiseKind::parse(s).ok_or_else(|| format!("unknown noise kind `{s}`"))
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a 16 kHz mono WAV file.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write noisy/clean WAV pairs from a manifest or from synthetic sources.
    Mix {
        /// Manifest file; without it, `--count` synthetic items are mixed.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value = "white", value_parser = parse_noise)]
        noise: NoiseKind,
        /// Fixed SNR in dB; overrides the manifest range.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on synthetic 0 dB mixtures and save the best weights.
    TrainToy {
        #[arg(long, default_value = "tiny")]
        config: String,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<MaskVariant>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        items: usize,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value = "white", value_parser = parse_noise)]
        noise: NoiseKind,
        /// Directory for checkpoints, history and `best.dctw`.
        #[arg(long)]
        out: PathBuf,
    },
    /// SNR and SI-SNR of an estimate against a reference.
    Eval { enhanced: PathBuf, clean: PathBuf },
    /// Parameter and FLOP report.
    Info {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Finite-difference checks of every gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Real-time factor and per-hop latency on synthetic input.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        /// Random initialization is used when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_model(model: &ModelArgs, weights: Option<&Path>, seed: u64) -> Result<Dctcrn> {
    let cfg = model.resolve()?;
    match weights {
        Some(p) => {
            let params = load_weights_for(p, &cfg)?;
            Dctcrn::new(cfg, params)
        }
        None => Dctcrn::init(cfg, seed),
    }
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Enhance {
            input,
            output,
            weights,
            model,
        } => {
            let model = load_model(&model, Some(&weights), 0)?;
            let stats = enhance_file(&input, &output, Arc::new(model))?;
            print!("{}", stats.to_key_values());
        }
        Command::Mix {
            manifest,
            count,
            noise,
            snr,
            duration,
            epoch,
            seed,
            out,
        } => {
            let mut m = match manifest {
                Some(p) => DatasetManifest::load(p)?,
                None => DatasetManifest::synthetic(count, seed, noise, duration, (-10.0, 20.0)),
            };
            if let Some(s) = snr {
                m.snr_range = (s, s);
            }
            std::fs::create_dir_all(&out)?;
            for (i, pair) in epoch_stream(&m, epoch)?.enumerate() {
                let pair = pair?;
                save_wav(
                    &Waveform::new(pair.noisy)?,
                    out.join(format!("noisy_{i:04}.wav")),
                )?;
                save_wav(
                    &Waveform::new(pair.clean)?,
                    out.join(format!("clean_{i:04}.wav")),
                )?;
                println!(
                    "item={i} target_snr_db={:.2} snr_db={:.2} seed={}",
                    pair.snr_db + 0.0,
                    pair.achieved_snr_db + 0.0,
                    pair.seed
                );
            }
        }
        Command::TrainToy {
            config,
            variant,
            seed,
            steps,
            items,
            duration,
            noise,
            out,
        } => {
            let model_cfg = ModelArgs { config, variant }.resolve()?;
            let train_set = DatasetManifest::synthetic(
                items,
                seed.wrapping_add(1),
                noise,
                duration,
                (0.0, 0.0),
            );
            let val_set =
                DatasetManifest::synthetic(8, seed.wrapping_add(2), noise, duration, (0.0, 0.0));
            let test_set =
                DatasetManifest::synthetic(8, seed.wrapping_add(3), noise, duration, (0.0, 0.0));
            let cfg = TrainConfig {
                max_steps: Some(steps),
                checkpoint_dir: Some(out.clone()),
                ..TrainConfig::toy(seed)
            };
            let (model, history) =
                train_with_progress(&cfg, &model_cfg, &train_set, &val_set, |r| {
                    println!(
                        "epoch={} train_loss={:.4} val_loss={:.4} lr={:.3e}",
                        r.epoch, r.train_loss, r.val_loss, r.lr
                    );
                })?;
            save_weights(out.join("best.dctw"), model.params())?;
            let test: Vec<_> = epoch_stream(&test_set, 0)?.collect::<Result<_>>()?;
            let (before, after) = si_snr_before_after(&model, &test, true)?;
            println!("steps={} best_epoch={}", history.steps, history.best_epoch);
            println!(
                "noisy_si_snr_db={before:.2} enhanced_si_snr_db={after:.2} improvement_db={:.2}",
                after - before
            );
        }
        Command::Eval { enhanced, clean } => {
            let e = load_wav(&enhanced)?;
            let c = load_wav(&clean)?;
            let snr = snr_metric(e.samples(), c.samples())?;
            let si = si_snr(e.samples(), c.samples(), &SiSnrOptions::default())?;
            println!("snr_db={snr:.2} si_snr_db={si:.2}");
        }
        Command::Info { model } => {
            let cfg = model.resolve()?;
            println!("{}", ModelReport::new(&cfg));
        }
        Command::Gradcheck { seeds, seed } => {
            let report = run_suite(seed..seed + seeds);
            for r in report.failures(TOLERANCE) {
                println!(
                    "fail check={} seed={} max_rel_err={:.3e}",
                    r.name, r.seed, r.max_rel_err
                );
            }
            if let Some(w) = report.worst() {
                println!(
                    "worst_rel_err={:.3e} check={} seed={}",
                    w.max_rel_err, w.name, w.seed
                );
            }
            let ok = report.passed(TOLERANCE);
            println!("checks={} passed={ok}", report.results.len());
            return Ok(ok);
        }
        Command::Bench {
            model,
            weights,
            seconds,
            seed,
        } => {
            let model = load_model(&model, weights.as_deref(), seed)?;
            let stats = rtf_benchmark(Arc::new(model), seconds, seed)?;
            print!("{}", stats.to_key_values());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::LengthMismatch { .. }) {
                eprintln!("inputs must have the same number of samples");
            }
            ExitCode::from(1)
        }
    }
}
