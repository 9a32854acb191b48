//! Pushes a noisy signal through a session hop by hop, compares against the
//! offline path, and round-trips the result through WAV files.
//!
//! cargo run --release --example stream_enhance -- [out_dir]

use std::sync::Arc;

use dctcrn::datagen::{mix_at_snr, synth_noise, synth_speechlike, MixSpec, NoiseKind};
use dctcrn::nn::{Dctcrn, ModelConfig};
use dctcrn::signal::{save_wav, Waveform};
use dctcrn::stream::{
    enhance_file, enhance_offline, enhance_streaming, EnhancerSession, ModelMasker,
};

fn main() -> dctcrn::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let model = Arc::new(Dctcrn::init(ModelConfig::default(), 3)?);
    let params = model.frame_params();
    let speech = synth_speechlike(5, 2.0)?;
    let noise = synth_noise(NoiseKind::Pink, 6, 2.0)?;
    let mix = mix_at_snr(speech.samples(), noise.samples(), &MixSpec::new(5.0, 1))?;

    let mut session = EnhancerSession::new(ModelMasker::new(model.clone()), params)?;
    let mut first = None;
    for (i, hop) in mix.noisy.chunks_exact(params.hop).enumerate().take(8) {
        if session.push_hop(hop)?.is_some() && first.is_none() {
            first = Some((i + 1) * params.hop);
        }
    }
    println!("first_output_after_samples={}", first.unwrap_or(0));
    session.reset();

    let (streamed, times) = enhance_streaming(&mut session, &mix.noisy)?;
    let offline = enhance_offline(
        &mut ModelMasker::new(model.clone()),
        params,
        &mix.noisy,
        true,
    )?;
    let diff = streamed
        .iter()
        .zip(&offline)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mean_ms = 1e3 * times.iter().sum::<f64>() / times.len() as f64;
    println!(
        "samples={} max_abs_diff={diff:.3e} hop_mean_ms={mean_ms:.3}",
        streamed.len()
    );

    let noisy_path = out_dir.join("dctcrn_noisy.wav");
    let out_path = out_dir.join("dctcrn_enhanced.wav");
    save_wav(&Waveform::new(mix.noisy)?, &noisy_path)?;
    let stats = enhance_file(&noisy_path, &out_path, model)?;
    print!("{}", stats.to_key_values());
    Ok(())
}
