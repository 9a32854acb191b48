//! Fits the tiny model to a single 0 dB utterance.

use dctcrn::datagen::{DatasetManifest, NoiseKind};
use dctcrn::nn::ModelConfig;
use dctcrn::train::{train_with_progress, TrainConfig};

fn main() -> dctcrn::Result<()> {
    let set = DatasetManifest::synthetic(1, 5, NoiseKind::White, 1.0, (0.0, 0.0));
    let (_, history) = train_with_progress(
        &TrainConfig::overfit(0),
        &ModelConfig::tiny(),
        &set,
        &set,
        |r| {
            println!(
                "epoch={} train_loss={:.3} val_loss={:.3} lr={:.2e}",
                r.epoch, r.train_loss, r.val_loss, r.lr
            );
        },
    )?;
    if let Some(best) = history.best() {
        println!("best_epoch={} si_snr_db={:.2}", best.epoch, -best.val_loss);
    }
    Ok(())
}
