//! Parameter and per-frame compute counts.
//!
//! Multiply-accumulates count the dense products only: a convolution costs
//! `output values x c_in x kernel taps`, a transposed convolution
//! `input values x c_out x kernel taps` (zero padding included, biases and
//! activations excluded). One MAC is two FLOPs.

use std::fmt;

use super::config::ModelConfig;
use super::params::param_specs;

/// One row of the model report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub params: usize,
    /// Multiply-accumulates per frame.
    pub macs: usize,
}

/// Per-layer breakdown for `cfg`, in forward order.
pub fn layer_report(cfg: &ModelConfig) -> Vec<LayerCost> {
    let specs = param_specs(cfg);
    let params_of = |prefix: &str| -> usize {
        specs
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    };
    let taps = cfg.kernel.freq * cfg.kernel.time;
    let mut rows = Vec::new();
    for (i, &c_out) in cfg.encoder_channels.iter().enumerate() {
        let f_out = cfg.encoder_bins(i) / 2;
        rows.push(LayerCost {
            name: format!("enc.{i}"),
            params: params_of(&format!("enc.{i}.")),
            macs: f_out * c_out * cfg.encoder_in_channels(i) * taps,
        });
    }
    let h = cfg.lstm_hidden;
    for l in 0..cfg.lstm_layers {
        rows.push(LayerCost {
            name: format!("lstm.{l}"),
            params: params_of(&format!("lstm.{l}.")),
            macs: 4 * h * (cfg.lstm_input(l) + h),
        });
    }
    rows.push(LayerCost {
        name: "proj".into(),
        params: params_of("proj."),
        macs: cfg.bottleneck_width() * h,
    });
    for (k, &c_out) in cfg.decoder_channels.iter().enumerate() {
        rows.push(LayerCost {
            name: format!("dec.{k}"),
            params: params_of(&format!("dec.{k}.")),
            macs: cfg.decoder_bins(k) * cfg.decoder_in_channels(k) * c_out * taps,
        });
    }
    let mask = params_of("mask.");
    if mask > 0 {
        rows.push(LayerCost {
            name: "mask".into(),
            params: mask,
            macs: 0,
        });
    }
    rows
}

pub fn count_params(cfg: &ModelConfig) -> usize {
    param_specs(cfg)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

/// Multiply-accumulates per frame.
pub fn count_macs(cfg: &ModelConfig) -> usize {
    layer_report(cfg).iter().map(|r| r.macs).sum()
}

/// FLOPs per frame (two per MAC).
pub fn count_flops(cfg: &ModelConfig) -> usize {
    2 * count_macs(cfg)
}

/// Printable summary with totals.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub layers: Vec<LayerCost>,
    pub params: usize,
    pub macs_per_frame: usize,
    pub frames_per_second: f64,
}

/// Reference point for the comparison line in the report.
pub const REFERENCE_PARAMS: usize = 2_860_000;

impl ModelReport {
    pub fn new(cfg: &ModelConfig) -> Self {
        let fp = cfg.frame_params();
        Self {
            layers: layer_report(cfg),
            params: count_params(cfg),
            macs_per_frame: count_macs(cfg),
            frames_per_second: crate::signal::SAMPLE_RATE as f64 / fp.hop as f64,
        }
    }

    pub fn gflops_per_second(&self) -> f64 {
        2.0 * self.macs_per_frame as f64 * self.frames_per_second / 1e9
    }
}

impl fmt::Display for ModelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>10} {:>12}", "layer", "params", "macs/frame")?;
        for r in &self.layers {
            writeln!(f, "{:<8} {:>10} {:>12}", r.name, r.params, r.macs)?;
        }
        writeln!(f, "params={}", self.params)?;
        writeln!(f, "macs_per_frame={}", self.macs_per_frame)?;
        writeln!(f, "flops_per_frame={}", 2 * self.macs_per_frame)?;
        writeln!(f, "gflops_per_second={:.3}", self.gflops_per_second())?;
        let delta = self.params as i64 - REFERENCE_PARAMS as i64;
        write!(
            f,
            "delta_vs_2.86M={delta:+} (bottleneck: LSTM input is the flattened last encoder map, \
             a linear layer maps the second LSTM back to that width)"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MaskVariant;

    #[test]
    fn tiny_counts_by_hand() {
        // Bottleneck is 4 channels x 16 bins = 64 wide.
        let cfg = ModelConfig::tiny();
        let enc = (2 * 10 + 2 + 1) + (4 * 2 * 10 + 4 + 1);
        let lstm = (4 * 8 * (64 + 8) + 32) + (4 * 8 * (8 + 8) + 32);
        let proj = 64 * 8 + 64;
        let dec = (8 * 2 * 10 + 2 + 1) + (4 * 10 + 1);
        assert_eq!(count_params(&cfg), enc + lstm + proj + dec);
        assert_eq!(count_params(&cfg), 3768);
    }

    #[test]
    fn single_conv_weight_and_bias() {
        let cfg = ModelConfig {
            encoder_channels: vec![2],
            decoder_channels: vec![1],
            ..ModelConfig::tiny()
        };
        let specs = param_specs(&cfg);
        let n: usize = specs
            .iter()
            .filter(|(name, _)| name == "enc.0.weight" || name == "enc.0.bias")
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        assert_eq!(n, 22);
        // Plus the activation slope.
        assert_eq!(layer_report(&cfg)[0].params, 23);
    }

    #[test]
    fn recurrent_only_closed_form() {
        let (d, h) = (64usize, 8usize);
        let cfg = ModelConfig {
            encoder_channels: vec![],
            decoder_channels: vec![],
            lstm_layers: 2,
            lstm_hidden: h,
            input_bins: d,
            ..ModelConfig::tiny()
        };
        let lstm = 4 * (d * h + h * h + h) + 4 * (h * h + h * h + h);
        assert_eq!(count_params(&cfg), lstm + d * h + d);
    }

    #[test]
    fn default_lands_in_expected_range() {
        let n = count_params(&ModelConfig::default().with_variant(MaskVariant::Prelu));
        assert!((2_000_000..=4_000_000).contains(&n), "{n}");
    }

    #[test]
    fn report_sums() {
        let cfg = ModelConfig::default();
        let r = ModelReport::new(&cfg);
        assert_eq!(r.layers.iter().map(|l| l.params).sum::<usize>(), r.params);
        assert_eq!(count_flops(&cfg), 2 * r.macs_per_frame);
        let text = r.to_string();
        assert!(text.contains("params=") && text.contains("delta_vs_2.86M="));
    }
}
