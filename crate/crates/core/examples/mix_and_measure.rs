//! Mixing at target SNRs measured over active speech.

use dctcrn::datagen::{
    active_power, mix_at_snr, synth_noise, synth_speechlike, MixSpec, NoiseKind,
};

fn main() -> dctcrn::Result<()> {
    let speech = synth_speechlike(4, 2.0)?;
    for (i, kind) in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble]
        .into_iter()
        .enumerate()
    {
        let noise = synth_noise(kind, 10 + i as u64, 2.0)?;
        for snr in [-10.0, 0.0, 20.0] {
            let m = mix_at_snr(speech.samples(), noise.samples(), &MixSpec::new(snr, 7))?;
            let exact = m
                .noisy
                .iter()
                .zip(m.clean.iter().zip(&m.scaled_noise))
                .all(|(y, (s, n))| *y == s + n);
            println!(
                "noise={kind} target_db={snr} achieved_db={:.4} gain={:.4} peak_scale={:.4} identity={exact} speech_power={:.3e}",
                m.achieved_snr_db,
                m.noise_gain,
                m.peak_scale,
                active_power(&m.clean)
            );
        }
    }
    Ok(())
}
