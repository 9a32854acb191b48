//! DCT-II/III round trip and short-time analysis/synthesis on noise.

use dctcrn::signal::FrameParams;
use dctcrn::transform::{dct_ii, dct_iii, ShortTimeDct};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dctcrn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [1, 8, 64, 512] {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = dct_ii(&x);
        let back = dct_iii(&c);
        let err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let energy = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        println!(
            "n={n} roundtrip_err={err:.2e} parseval_err={:.2e}",
            (energy(&x) - energy(&c)).abs()
        );
    }

    let audio: Vec<f64> = (0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let stdct = ShortTimeDct::new(FrameParams::default())?;
    let spec = stdct.analyze(&audio)?;
    let back = stdct.synthesize(&spec, audio.len())?;
    let err = audio
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "frames={} bins={} stdct_roundtrip_err={err:.2e}",
        spec.frames(),
        spec.bins()
    );
    Ok(())
}
