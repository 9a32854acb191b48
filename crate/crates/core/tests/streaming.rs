use std::sync::Arc;

use dctcrn::datagen::{mix_at_snr, synth_noise, synth_speechlike, MixSpec, NoiseKind};
use dctcrn::nn::{Dctcrn, ModelConfig};
use dctcrn::signal::{load_wav, save_wav, FrameParams, Waveform};
use dctcrn::stream::{
    enhance_file, enhance_offline, enhance_streaming, rtf_benchmark, EnhancerSession, ModelMasker,
    OracleMasker,
};
use dctcrn::Error;

fn speech(seed: u64, secs: f64) -> Vec<f64> {
    synth_speechlike(seed, secs).unwrap().into_samples()
}

#[test]
fn file_output_matches_input_length_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    let mut x = speech(1, 0.7);
    x.truncate(11_111);
    save_wav(&Waveform::new(x).unwrap(), &input).unwrap();
    let model = Arc::new(Dctcrn::init(ModelConfig::tiny(), 2).unwrap());
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    let stats = enhance_file(&input, &a, model.clone()).unwrap();
    enhance_file(&input, &b, model).unwrap();
    assert_eq!(load_wav(&a).unwrap().len(), 11_111);
    assert_eq!(stats.samples, 11_111);
    assert!(stats.to_key_values().contains("hop_p99_ms="));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn oracle_mask_on_clean_input_is_transparent() {
    let x = speech(3, 1.0);
    let params = FrameParams::default();
    let masker = OracleMasker::with_default_clamp(&x, params).unwrap();
    let mut session = EnhancerSession::new(masker, params).unwrap();
    let (out, _) = enhance_streaming(&mut session, &x).unwrap();
    let err = out
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn default_model_streams_like_offline() {
    let model = Arc::new(Dctcrn::init(ModelConfig::default(), 8).unwrap());
    let params = model.frame_params();
    let s = speech(4, 1.0);
    let n = synth_noise(NoiseKind::Pink, 5, 1.0).unwrap();
    let mix = mix_at_snr(&s, n.samples(), &MixSpec::new(0.0, 1)).unwrap();
    for variant_seed in [0u64, 1] {
        let model = if variant_seed == 0 {
            model.clone()
        } else {
            Arc::new(
                Dctcrn::init(
                    ModelConfig::default().with_variant(dctcrn::masking::MaskVariant::Prelu),
                    9,
                )
                .unwrap(),
            )
        };
        let mut session = EnhancerSession::new(ModelMasker::new(model.clone()), params).unwrap();
        let (streamed, _) = enhance_streaming(&mut session, &mix.noisy).unwrap();
        let offline =
            enhance_offline(&mut ModelMasker::new(model), params, &mix.noisy, true).unwrap();
        let diff = streamed
            .iter()
            .zip(&offline)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }
}

#[test]
fn session_rejects_mismatched_masker() {
    let model = Arc::new(Dctcrn::init(ModelConfig::tiny(), 0).unwrap());
    let r = EnhancerSession::new(ModelMasker::new(model), FrameParams::default());
    assert!(matches!(r, Err(Error::ShapeMismatch(_))));
}

#[test]
fn sessions_reset_to_a_clean_state() {
    let model = Arc::new(Dctcrn::init(ModelConfig::tiny(), 0).unwrap());
    let params = model.frame_params();
    let x = speech(6, 0.2);
    let mut s = EnhancerSession::new(ModelMasker::new(model), params).unwrap();
    let (first, _) = enhance_streaming(&mut s, &x).unwrap();
    for hop in x.chunks_exact(params.hop).take(7) {
        s.push_hop(hop).unwrap();
    }
    s.reset();
    assert_eq!(s.frames_consumed(), 0);
    let (again, _) = enhance_streaming(&mut s, &x).unwrap();
    assert_eq!(first, again);
}

#[test]
fn tiny_model_is_far_faster_than_real_time() {
    let model = Arc::new(Dctcrn::init(ModelConfig::tiny(), 0).unwrap());
    let stats = rtf_benchmark(model, 2.0, 0).unwrap();
    assert!(stats.rtf < 0.05, "{}", stats.rtf);
}
