//! Upper bound of masking: the ideal cosine mask applied to a 0 dB mixture.

use dctcrn::datagen::{mix_at_snr, synth_noise, synth_speechlike, MixSpec, NoiseKind};
use dctcrn::masking::{clip_postprocess, ideal_cosine_mask, DEFAULT_CLAMP};
use dctcrn::objective::{si_snr, SiSnrOptions};
use dctcrn::signal::FrameParams;
use dctcrn::transform::ShortTimeDct;

fn main() -> dctcrn::Result<()> {
    let speech = synth_speechlike(1, 3.0)?;
    let noise = synth_noise(NoiseKind::Babble, 2, 3.0)?;
    let mix = mix_at_snr(speech.samples(), noise.samples(), &MixSpec::new(0.0, 3))?;
    let stdct = ShortTimeDct::new(FrameParams::default())?;
    let s = stdct.analyze(&mix.clean)?;
    let y = stdct.analyze(&mix.noisy)?;
    let opts = SiSnrOptions::default();
    println!(
        "noisy_si_snr_db={:.2}",
        si_snr(&mix.noisy, &mix.clean, &opts)?
    );
    for clamp in [1.0, 10.0, DEFAULT_CLAMP] {
        let mask = ideal_cosine_mask(&s, &y, clamp)?;
        let shat = mask.apply_to(&y)?;
        let out = stdct.synthesize(&shat, mix.noisy.len())?;
        // The magnitude clip cannot restore coefficients where the noise
        // cancelled part of the speech.
        let clipped = stdct.synthesize(&clip_postprocess(&shat, &y)?, mix.noisy.len())?;
        println!(
            "clamp={clamp} oracle_si_snr_db={:.2} with_clip_db={:.2}",
            si_snr(&out, &mix.clean, &opts)?,
            si_snr(&clipped, &mix.clean, &opts)?
        );
    }
    Ok(())
}
