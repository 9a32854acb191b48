use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskVariant;
use crate::signal::FrameParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSize {
    pub freq: usize,
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stride {
    pub freq: usize,
    pub time: usize,
}

/// Architecture of the convolutional-recurrent mask estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub kernel: KernelSize,
    pub stride: Stride,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Cosine bins per frame; equal to the frame length.
    pub input_bins: usize,
    pub mask_variant: MaskVariant,
}

impl Default for ModelConfig {
    /// 512-bin frames, seven encoder/decoder stages, two 256-unit LSTM layers.
    fn default() -> Self {
        Self {
            encoder_channels: vec![8, 16, 32, 64, 128, 128, 256],
            decoder_channels: vec![128, 128, 64, 32, 16, 8, 1],
            kernel: KernelSize { freq: 5, time: 2 },
            stride: Stride { freq: 2, time: 1 },
            lstm_layers: 2,
            lstm_hidden: 256,
            input_bins: 512,
            mask_variant: MaskVariant::Tanh,
        }
    }
}

impl ModelConfig {
    /// Desk-scale model: 64-bin frames (16-sample hop), two stages, 8 LSTM units.
    pub fn tiny() -> Self {
        Self {
            encoder_channels: vec![2, 4],
            decoder_channels: vec![2, 1],
            lstm_hidden: 8,
            input_bins: 64,
            ..Self::default()
        }
    }

    /// Smallest useful shape, for gradient checks.
    pub fn micro() -> Self {
        Self {
            encoder_channels: vec![2],
            decoder_channels: vec![1],
            lstm_hidden: 3,
            input_bins: 8,
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, variant: MaskVariant) -> Self {
        self.mask_variant = variant;
        self
    }

    /// `default`, `tiny`, `micro`, or a path to a JSON file.
    pub fn from_name_or_path(spec: &str) -> Result<Self> {
        match spec {
            "default" => Ok(Self::default()),
            "tiny" => Ok(Self::tiny()),
            "micro" => Ok(Self::micro()),
            path => Self::load_json(path),
        }
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Frames as long as the bin count, hop of a quarter frame.
    pub fn frame_params(&self) -> FrameParams {
        FrameParams::new(self.input_bins, self.input_bins / 4)
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Channels entering the recurrent bottleneck.
    pub fn bottleneck_channels(&self) -> usize {
        self.encoder_channels.last().copied().unwrap_or(1)
    }

    pub fn bottleneck_bins(&self) -> usize {
        self.input_bins >> self.depth()
    }

    /// Flattened per-frame size of the bottleneck feature map.
    pub fn bottleneck_width(&self) -> usize {
        self.bottleneck_channels() * self.bottleneck_bins()
    }

    /// Input bins of encoder layer `i` (output bins are half of that).
    pub fn encoder_bins(&self, i: usize) -> usize {
        self.input_bins >> i
    }

    pub fn encoder_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            self.encoder_channels[i - 1]
        }
    }

    /// Input channels of decoder layer `k`: previous output concatenated with
    /// the mirrored encoder output.
    pub fn decoder_in_channels(&self, k: usize) -> usize {
        let prev = if k == 0 {
            self.bottleneck_channels()
        } else {
            self.decoder_channels[k - 1]
        };
        prev + self.encoder_channels[self.depth() - 1 - k]
    }

    /// Input bins of decoder layer `k` (output bins are twice that).
    pub fn decoder_bins(&self, k: usize) -> usize {
        self.input_bins >> (self.depth() - k)
    }

    pub fn lstm_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.bottleneck_width()
        } else {
            self.lstm_hidden
        }
    }

    /// Left zero-padding in frequency; the right side gets one less so that
    /// a stride-2 layer exactly halves the bin count.
    pub fn freq_pad_left(&self) -> usize {
        (self.kernel.freq - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.encoder_channels.len() != self.decoder_channels.len() {
            return fail(format!(
                "encoder has {} layers but decoder has {}",
                self.encoder_channels.len(),
                self.decoder_channels.len()
            ));
        }
        if let Some(&last) = self.decoder_channels.last() {
            if last != 1 {
                return fail(format!(
                    "final decoder layer must have 1 channel, got {last}"
                ));
            }
        }
        if self
            .encoder_channels
            .iter()
            .chain(&self.decoder_channels)
            .any(|&c| c == 0)
        {
            return fail("channel counts must be positive".into());
        }
        if self.kernel.time != 2 || self.stride.time != 1 || self.stride.freq != 2 {
            return fail(
                "only a 2-frame causal kernel with stride (freq 2, time 1) is supported".into(),
            );
        }
        if self.kernel.freq < 2 {
            return fail("frequency kernel must span at least 2 bins".into());
        }
        if self.input_bins < 4 || self.input_bins % 4 != 0 {
            return fail(format!(
                "input bins {} must be a positive multiple of 4",
                self.input_bins
            ));
        }
        if self.input_bins % (1usize << self.depth()) != 0 {
            return fail(format!(
                "input bins {} not divisible by 2^{}",
                self.input_bins,
                self.depth()
            ));
        }
        if self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return fail("the bottleneck needs at least one LSTM layer with hidden units".into());
        }
        Ok(())
    }
}
