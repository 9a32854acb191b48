//! Trains the tiny model on synthetic 0 dB mixtures and reports the held-out
//! SI-SNR before and after enhancement.
//!
//! cargo run --release --example train_toy -- [steps] [noise]

use dctcrn::datagen::{epoch_stream, DatasetManifest, MixedPair, NoiseKind};
use dctcrn::nn::ModelConfig;
use dctcrn::train::{si_snr_before_after, train_with_progress, TrainConfig};

fn main() -> dctcrn::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let kind = args
        .get(2)
        .and_then(|s| NoiseKind::parse(s))
        .unwrap_or(NoiseKind::White);
    let train_set = DatasetManifest::synthetic(32, 1, kind, 1.0, (0.0, 0.0));
    let val_set = DatasetManifest::synthetic(8, 2, kind, 1.0, (0.0, 0.0));
    let test_set = DatasetManifest::synthetic(8, 3, kind, 1.0, (0.0, 0.0));
    let cfg = TrainConfig {
        max_steps: Some(steps),
        ..TrainConfig::toy(0)
    };
    let start = std::time::Instant::now();
    let (model, history) =
        train_with_progress(&cfg, &ModelConfig::tiny(), &train_set, &val_set, |r| {
            eprintln!(
                "epoch={} train_loss={:.3} val_loss={:.3} lr={:.2e}",
                r.epoch, r.train_loss, r.val_loss, r.lr
            );
        })?;
    let test: Vec<MixedPair> = epoch_stream(&test_set, 0)?.collect::<dctcrn::Result<_>>()?;
    let (before, after) = si_snr_before_after(&model, &test, true)?;
    println!(
        "steps={} best_epoch={} seconds={:.1}",
        history.steps,
        history.best_epoch,
        start.elapsed().as_secs_f64()
    );
    println!(
        "noisy_si_snr_db={before:.2} enhanced_si_snr_db={after:.2} improvement_db={:.2}",
        after - before
    );
    Ok(())
}
