use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::masking::{MaskVariant, PRELU_INIT};

/// Named tensors in a fixed, config-derived order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParameterSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, t) in entries {
            if names.contains(&name) {
                return Err(Error::ShapeMismatch(format!(
                    "duplicate tensor name `{name}`"
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }

    /// All-zero tensors with the layout of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (names, tensors) = param_specs(cfg)
            .into_iter()
            .map(|(n, s)| (n, Tensor::zeros(&s)))
            .unzip();
        Self { names, tensors }
    }

    /// Seeded initialization:
    /// * conv kernels uniform in `±sqrt(6 / ((1 + a²) fan_in))` for PReLU slope `a`,
    /// * LSTM matrices and the projection uniform in `±1/sqrt(H)`,
    /// * biases zero except the LSTM forget gate (+1), PReLU slopes 0.25.
    ///
    /// Values are rounded to f32 so a saved file reloads bit-identically.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = Self::zeros(cfg);
        let kernel_taps = (cfg.kernel.freq * cfg.kernel.time) as f64;
        let gain = 6.0 / (1.0 + PRELU_INIT * PRELU_INIT);
        let h = cfg.lstm_hidden;
        for (name, t) in set.names.iter().zip(set.tensors.iter_mut()) {
            let shape = t.shape().to_vec();
            let bound = if name.ends_with(".alpha") {
                t.fill(PRELU_INIT);
                continue;
            } else if name.starts_with("enc.") && name.ends_with(".weight") {
                (gain / (shape[1] as f64 * kernel_taps)).sqrt()
            } else if name.starts_with("dec.") && name.ends_with(".weight") {
                // Each output bin of a stride-2 transposed conv sees half the taps.
                (gain / (shape[0] as f64 * kernel_taps / 2.0)).sqrt()
            } else if (name.starts_with("lstm.") && !name.ends_with(".bias"))
                || name == "proj.weight"
            {
                1.0 / (h as f64).sqrt()
            } else {
                0.0
            };
            for v in t.data_mut() {
                *v = if bound > 0.0 {
                    rng.gen_range(-bound..bound) as f32 as f64
                } else {
                    0.0
                };
            }
            if name.starts_with("lstm.") && name.ends_with(".bias") {
                t.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same names and shapes, zero values.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParameterSet) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    /// Rounds every value to the nearest f32, as storage does.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Reorders and checks tensors against the layout of `cfg`.
    pub fn conform(self, cfg: &ModelConfig) -> Result<Self> {
        let specs = param_specs(cfg);
        for name in &self.names {
            if !specs.iter().any(|(n, _)| n == name) {
                return Err(Error::UnknownTensor(name.clone()));
            }
        }
        let mut by_name: Vec<Option<Tensor>> = self.tensors.into_iter().map(Some).collect();
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (name, shape) in specs {
            let idx = self
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            let t = by_name[idx].take().expect("names are unique");
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor `{name}` has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }
}

/// Names and shapes of every trainable tensor of `cfg`, in storage order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let kt = cfg.kernel.time;
    let kf = cfg.kernel.freq;
    let mut out = Vec::new();
    for (i, &c_out) in cfg.encoder_channels.iter().enumerate() {
        let c_in = cfg.encoder_in_channels(i);
        out.push((format!("enc.{i}.weight"), vec![c_out, c_in, kt, kf]));
        out.push((format!("enc.{i}.bias"), vec![c_out]));
        out.push((format!("enc.{i}.alpha"), vec![1]));
    }
    let h = cfg.lstm_hidden;
    for l in 0..cfg.lstm_layers {
        let d = cfg.lstm_input(l);
        out.push((format!("lstm.{l}.w_ih"), vec![4 * h, d]));
        out.push((format!("lstm.{l}.w_hh"), vec![4 * h, h]));
        out.push((format!("lstm.{l}.bias"), vec![4 * h]));
    }
    let width = cfg.bottleneck_width();
    out.push(("proj.weight".into(), vec![width, h]));
    out.push(("proj.bias".into(), vec![width]));
    let n = cfg.decoder_channels.len();
    for (k, &c_out) in cfg.decoder_channels.iter().enumerate() {
        let c_in = cfg.decoder_in_channels(k);
        out.push((format!("dec.{k}.weight"), vec![c_in, c_out, kt, kf]));
        out.push((format!("dec.{k}.bias"), vec![c_out]));
        if k + 1 < n {
            out.push((format!("dec.{k}.alpha"), vec![1]));
        }
    }
    if cfg.mask_variant == MaskVariant::Prelu {
        out.push(("mask.alpha".into(), vec![1]));
    }
    out
}

/// Indices into a conforming [`ParameterSet`].
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub enc: Vec<ConvSlots>,
    pub lstm: Vec<LstmSlots>,
    pub proj_weight: usize,
    pub proj_bias: usize,
    pub dec: Vec<ConvSlots>,
    pub mask_alpha: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvSlots {
    pub weight: usize,
    pub bias: usize,
    pub alpha: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmSlots {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut next = 0usize;
        let mut take = || {
            next += 1;
            next - 1
        };
        let enc = cfg
            .encoder_channels
            .iter()
            .map(|_| ConvSlots {
                weight: take(),
                bias: take(),
                alpha: Some(take()),
            })
            .collect();
        let lstm = (0..cfg.lstm_layers)
            .map(|_| LstmSlots {
                w_ih: take(),
                w_hh: take(),
                bias: take(),
            })
            .collect();
        let proj_weight = take();
        let proj_bias = take();
        let n = cfg.decoder_channels.len();
        let dec = (0..n)
            .map(|k| ConvSlots {
                weight: take(),
                bias: take(),
                alpha: (k + 1 < n).then(&mut take),
            })
            .collect();
        let mask_alpha = (cfg.mask_variant == MaskVariant::Prelu).then(take);
        Self {
            enc,
            lstm,
            proj_weight,
            proj_bias,
            dec,
            mask_alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_specs() {
        for cfg in [
            ModelConfig::default().with_variant(MaskVariant::Prelu),
            ModelConfig::tiny(),
            ModelConfig::micro(),
        ] {
            let specs = param_specs(&cfg);
            let l = Layout::new(&cfg);
            assert_eq!(specs[l.enc[0].weight].0, "enc.0.weight");
            assert_eq!(specs[l.lstm[1].bias].0, "lstm.1.bias");
            assert_eq!(specs[l.proj_bias].0, "proj.bias");
            let last = l.dec.last().unwrap();
            assert!(last.alpha.is_none());
            assert_eq!(specs[last.bias].0, format!("dec.{}.bias", cfg.depth() - 1));
            if let Some(i) = l.mask_alpha {
                assert_eq!(specs[i].0, "mask.alpha");
                assert_eq!(i, specs.len() - 1);
            }
        }
    }

    #[test]
    fn init_is_seeded_and_f32_exact() {
        let cfg = ModelConfig::tiny();
        let a = ParameterSet::init(&cfg, 3).unwrap();
        let b = ParameterSet::init(&cfg, 3).unwrap();
        let c = ParameterSet::init(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (_, t) in a.iter() {
            assert!(t.data().iter().all(|&v| v as f32 as f64 == v));
        }
        let bias = a.get("lstm.0.bias").unwrap().data();
        assert!(bias[8..16].iter().all(|&v| v == 1.0));
        assert!(bias[..8].iter().all(|&v| v == 0.0));
        assert_eq!(a.get("enc.1.alpha").unwrap().data(), &[0.25]);
    }

    #[test]
    fn conform_reports_offenders() {
        let cfg = ModelConfig::micro();
        let set = ParameterSet::zeros(&cfg);
        let mut entries: Vec<(String, Tensor)> = set
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        entries.reverse();
        let shuffled = ParameterSet::new(entries.clone()).unwrap();
        assert_eq!(shuffled.conform(&cfg).unwrap(), set);

        let mut renamed = entries.clone();
        renamed[0].0 = "bogus".into();
        match ParameterSet::new(renamed).unwrap().conform(&cfg) {
            Err(Error::UnknownTensor(n)) => assert_eq!(n, "bogus"),
            other => panic!("unexpected {other:?}"),
        }

        let mut short = entries.clone();
        short.pop();
        assert!(matches!(
            ParameterSet::new(short).unwrap().conform(&cfg),
            Err(Error::MissingTensor(_))
        ));

        let mut bad = entries;
        bad[0].1 = Tensor::zeros(&[7]);
        assert!(matches!(
            ParameterSet::new(bad).unwrap().conform(&cfg),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
