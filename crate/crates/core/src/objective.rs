//! Scale-invariant SNR (the training objective) and plain SNR.

use std::f64::consts::LN_10;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiSnrOptions {
    /// Remove the mean of both signals first.
    pub zero_mean: bool,
    /// Added to the error energy.
    pub eps: f64,
    /// Values are limited to `[-cap_db, cap_db]`.
    pub cap_db: f64,
    /// Measure the error against the reference itself (`e = shat - s`)
    /// instead of against its projection. Not scale-invariant.
    pub literal_eq8: bool,
}

impl Default for SiSnrOptions {
    fn default() -> Self {
        Self {
            zero_mean: true,
            eps: 1e-8,
            cap_db: 60.0,
            literal_eq8: false,
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("signals must not be empty".into()));
    }
    Ok(())
}

fn centered(x: &[f64], on: bool) -> Vec<f64> {
    if !on {
        return x.to_vec();
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SI-SNR of `shat` against `s` in dB.
pub fn si_snr(shat: &[f64], s: &[f64], opts: &SiSnrOptions) -> Result<f64> {
    Ok(si_snr_impl(shat, s, opts, false)?.0)
}

/// SI-SNR and its gradient with respect to `shat`.
pub fn si_snr_grad(shat: &[f64], s: &[f64], opts: &SiSnrOptions) -> Result<(f64, Vec<f64>)> {
    let (v, g) = si_snr_impl(shat, s, opts, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn si_snr_impl(
    shat: &[f64],
    s: &[f64],
    opts: &SiSnrOptions,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_lengths(shat, s)?;
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    let x = centered(shat, opts.zero_mean);
    let r = centered(s, opts.zero_mean);
    let rr = dot(&r, &r);
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let a = dot(&x, &r) / rr;
    let target: Vec<f64> = r.iter().map(|v| a * v).collect();
    let err: Vec<f64> = if opts.literal_eq8 {
        x.iter().zip(&r).map(|(p, q)| p - q).collect()
    } else {
        x.iter().zip(&target).map(|(p, q)| p - q).collect()
    };
    let num = dot(&target, &target);
    let den = dot(&err, &err) + opts.eps;
    let cap = opts.cap_db;
    let raw = if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (num / den).log10()
    };
    let value = raw.clamp(-cap, cap);
    if !want_grad {
        return Ok((value, None));
    }
    let n = x.len();
    let mut g = vec![0.0; n];
    if raw > -cap && raw < cap {
        let k = 10.0 / LN_10;
        // d|t|^2/dx = 2t. In the projected mode e is orthogonal to r, so
        // d|e|^2/dx = 2e as in the literal one.
        for i in 0..n {
            g[i] = k * (2.0 * target[i] / num - 2.0 * err[i] / den);
        }
        if opts.zero_mean {
            let mean = g.iter().sum::<f64>() / n as f64;
            g.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok((value, Some(g)))
}

/// `10 log10(|s|^2 / |shat - s|^2)`, limited to +-60 dB.
pub fn snr_metric(shat: &[f64], s: &[f64]) -> Result<f64> {
    check_lengths(shat, s)?;
    let sig = dot(s, s);
    let noise: f64 = shat.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
    const CAP: f64 = 60.0;
    Ok(if noise == 0.0 {
        CAP
    } else if sig == 0.0 {
        -CAP
    } else {
        (10.0 * (sig / noise).log10()).clamp(-CAP, CAP)
    })
}
