use dctcrn::datagen::{DatasetManifest, NoiseKind};
use dctcrn::nn::{load_weights_for, ModelConfig};
use dctcrn::train::{train, TrainConfig};

fn small_set(seed: u64, n: usize) -> DatasetManifest {
    DatasetManifest::synthetic(n, seed, NoiseKind::White, 0.25, (0.0, 0.0))
}

#[test]
fn stagnant_validation_stops_after_patience() {
    // A learning rate this small leaves every weight bit-identical.
    let cfg = TrainConfig {
        lr0: 1e-300,
        patience: 3,
        max_epochs: 50,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let (_, history) = train(
        &cfg,
        &ModelConfig::tiny(),
        &small_set(1, 2),
        &small_set(2, 2),
    )
    .unwrap();
    assert_eq!(history.best_epoch, 1);
    assert_eq!(history.epochs.len(), 4);
    let v = history.val_losses();
    assert!(v.iter().all(|x| *x == v[0]));
}

#[test]
fn checkpoints_and_history_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 2,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..TrainConfig::default()
    };
    let (model, history) = train(
        &cfg,
        &ModelConfig::tiny(),
        &small_set(3, 2),
        &small_set(4, 2),
    )
    .unwrap();
    for e in 1..=3 {
        assert!(dir.path().join(format!("epoch_{e:04}.dctw")).exists());
    }
    let best = load_weights_for(dir.path().join("best.dctw"), &ModelConfig::tiny()).unwrap();
    // Weight files hold single precision.
    for (a, b) in best.tensors().iter().zip(model.params().tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
    let sidecar = std::fs::read_to_string(dir.path().join("history.txt")).unwrap();
    assert_eq!(sidecar, history.to_csv());
    assert_eq!(sidecar.lines().count(), 4);
    let best_val = history.best().unwrap().val_loss;
    assert!(history.epochs.iter().all(|r| r.val_loss >= best_val));
}

#[test]
fn same_seed_same_history() {
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 2,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || {
        train(
            &cfg,
            &ModelConfig::micro(),
            &small_set(5, 3),
            &small_set(6, 2),
        )
        .unwrap()
    };
    let (ma, ha) = run();
    let (mb, hb) = run();
    assert_eq!(ha, hb);
    assert_eq!(ma.params(), mb.params());
}
