//! Cosine-domain masks: the ideal ratio target, the three output activations,
//! mask application and the amplitude-limiting post-process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::DctSpectrogram;

/// Below this noisy-coefficient magnitude the ideal mask is not a ratio.
pub const EPS_DIV: f64 = 1e-8;

/// Default symmetric bound on ideal mask values.
pub const DEFAULT_CLAMP: f64 = 100.0;

/// Initial slope of every PReLU.
pub const PRELU_INIT: f64 = 0.25;

/// Output activation of the estimator's final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaskVariant {
    /// Unbounded mask, learned negative slope.
    Prelu,
    /// Mask in (0, 1).
    Sigmoid,
    /// Mask in (-1, 1).
    #[default]
    Tanh,
}

impl MaskVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" | "prelu" => Some(Self::Prelu),
            "s" | "sigmoid" => Some(Self::Sigmoid),
            "t" | "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Self::Prelu => 'p',
            Self::Sigmoid => 's',
            Self::Tanh => 't',
        }
    }
}

/// Elementwise map from logits to mask values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskActivation {
    Prelu(f64),
    Sigmoid,
    Tanh,
    /// Pass-through, for applying precomputed masks.
    Identity,
}

impl MaskActivation {
    pub fn for_variant(variant: MaskVariant, alpha: f64) -> Self {
        match variant {
            MaskVariant::Prelu => Self::Prelu(alpha),
            MaskVariant::Sigmoid => Self::Sigmoid,
            MaskVariant::Tanh => Self::Tanh,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Prelu(a) => prelu(x, a),
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
            Self::Identity => x,
        }
    }

    /// Derivative with respect to the input, given input `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Prelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Self::Sigmoid => y * (1.0 - y),
            Self::Tanh => 1.0 - y * y,
            Self::Identity => 1.0,
        }
    }
}

#[inline]
pub fn prelu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `frames x bins` mask values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
    variant: Option<MaskVariant>,
}

impl Mask {
    pub fn from_vec(
        frames: usize,
        bins: usize,
        data: Vec<f64>,
        variant: Option<MaskVariant>,
    ) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} mask values for {frames}x{bins}",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            data,
            variant,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `None` for ideal (oracle) masks.
    pub fn variant(&self) -> Option<MaskVariant> {
        self.variant
    }

    /// `mask * y`, elementwise.
    pub fn apply_to(&self, y: &DctSpectrogram) -> Result<DctSpectrogram> {
        if (self.frames, self.bins) != y.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs spectrogram {:?}",
                self.frames,
                self.bins,
                y.shape()
            )));
        }
        let data = self.data.iter().zip(y.data()).map(|(m, v)| m * v).collect();
        DctSpectrogram::from_vec(self.frames, self.bins, data)
    }
}

/// Clean-to-noisy coefficient ratio, bounded to `[-clamp, clamp]`. Where the
/// noisy coefficient is (near) zero the value is `sign(clean) * clamp`.
pub fn ideal_cosine_mask(
    clean: &DctSpectrogram,
    noisy: &DctSpectrogram,
    clamp: f64,
) -> Result<Mask> {
    clean.check_same_shape(noisy)?;
    if !(clamp > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mask clamp must be positive, got {clamp}"
        )));
    }
    let data = clean
        .data()
        .iter()
        .zip(noisy.data())
        .map(|(&s, &y)| {
            if y.abs() < EPS_DIV {
                sign(s) * clamp
            } else {
                (s / y).clamp(-clamp, clamp)
            }
        })
        .collect();
    Mask::from_vec(clean.frames(), clean.bins(), data, None)
}

/// Activates `logits` (same shape as `noisy`) and multiplies into `noisy`.
pub fn apply_mask(
    logits: &[f64],
    noisy: &DctSpectrogram,
    activation: MaskActivation,
) -> Result<DctSpectrogram> {
    if logits.len() != noisy.data().len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: noisy.data().len(),
        });
    }
    let data = logits
        .iter()
        .zip(noisy.data())
        .map(|(&l, &y)| activation.apply(l) * y)
        .collect();
    DctSpectrogram::from_vec(noisy.frames(), noisy.bins(), data)
}

#[inline]
pub fn clip_coefficient(shat: f64, y: f64) -> f64 {
    if shat.abs() <= y.abs() {
        shat
    } else {
        sign(shat) * y.abs()
    }
}

/// Limits every estimated coefficient to the magnitude of the noisy one.
pub fn clip_postprocess(shat: &DctSpectrogram, noisy: &DctSpectrogram) -> Result<DctSpectrogram> {
    shat.check_same_shape(noisy)?;
    let data = shat
        .data()
        .iter()
        .zip(noisy.data())
        .map(|(&s, &y)| clip_coefficient(s, y))
        .collect();
    DctSpectrogram::from_vec(shat.frames(), shat.bins(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(v: &[f64]) -> DctSpectrogram {
        DctSpectrogram::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn icm_examples() {
        let s = spec(&[1.0, -3.0, 1.0, 0.0, 500.0]);
        let y = spec(&[1.0, -3.0, 2.0, 0.0, 1.0]);
        let m = ideal_cosine_mask(&s, &y, 10.0).unwrap();
        assert_eq!(m.data(), &[1.0, 1.0, 0.5, 0.0, 10.0]);
        let m = ideal_cosine_mask(&spec(&[1.0]), &spec(&[0.0]), 10.0).unwrap();
        assert_eq!(m.data(), &[10.0]);
        let m = ideal_cosine_mask(&spec(&[-1.0]), &spec(&[1e-9]), 10.0).unwrap();
        assert_eq!(m.data(), &[-10.0]);
        assert!(m.variant().is_none());
    }

    #[test]
    fn icm_shape_mismatch() {
        assert!(ideal_cosine_mask(&spec(&[1.0]), &spec(&[1.0, 2.0]), 1.0).is_err());
        assert!(ideal_cosine_mask(&spec(&[1.0]), &spec(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn activation_examples() {
        let y = spec(&[2.0, -4.0]);
        let z = apply_mask(&[0.0, 0.0], &y, MaskActivation::Tanh).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0]);
        let z = apply_mask(&[0.0, 0.0], &y, MaskActivation::Sigmoid).unwrap();
        assert_eq!(z.data(), &[1.0, -2.0]);
        let z = apply_mask(&[-2.0, -2.0], &y, MaskActivation::Prelu(0.25)).unwrap();
        assert_eq!(z.data(), &[-1.0, 2.0]);
        assert!(apply_mask(&[0.0], &y, MaskActivation::Tanh).is_err());
    }

    #[test]
    fn clip_examples() {
        let y = spec(&[2.0, 2.0, 2.0, -2.0]);
        let s = spec(&[3.0, -3.0, 1.0, 5.0]);
        assert_eq!(
            clip_postprocess(&s, &y).unwrap().data(),
            &[2.0, -2.0, 1.0, 2.0]
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for act in [
            MaskActivation::Prelu(0.3),
            MaskActivation::Sigmoid,
            MaskActivation::Tanh,
            MaskActivation::Identity,
        ] {
            for x in [-1.7, -0.2, 0.4, 2.2] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                let an = act.derivative(x, act.apply(x));
                assert!((fd - an).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn variant_parse() {
        assert_eq!(MaskVariant::parse("P"), Some(MaskVariant::Prelu));
        assert_eq!(MaskVariant::parse("sigmoid"), Some(MaskVariant::Sigmoid));
        assert_eq!(MaskVariant::parse("t"), Some(MaskVariant::Tanh));
        assert_eq!(MaskVariant::parse("x"), None);
    }

    proptest! {
        #[test]
        fn clipped_is_bounded_and_idempotent(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)
        ) {
            let (s, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (s, y) = (spec(&s), spec(&y));
            let once = clip_postprocess(&s, &y).unwrap();
            for (c, n) in once.data().iter().zip(y.data()) {
                prop_assert!(c.abs() <= n.abs());
            }
            prop_assert_eq!(clip_postprocess(&once, &y).unwrap(), once);
        }

        #[test]
        fn bounded_variants_stay_in_range(x in -15.0f64..15.0) {
            let s = sigmoid(x);
            prop_assert!(s > 0.0 && s < 1.0);
            let t = x.tanh();
            prop_assert!(t > -1.0 && t < 1.0);
        }

        #[test]
        fn icm_is_clamped(s in -1e4f64..1e4, y in -1e4f64..1e4, clamp in 0.1f64..200.0) {
            let m = ideal_cosine_mask(&spec(&[s]), &spec(&[y]), clamp).unwrap();
            prop_assert!(m.data()[0].abs() <= clamp);
        }
    }
}
