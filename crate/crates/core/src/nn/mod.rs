//! The mask estimator: configuration, parameters, layer kernels with
//! hand-written gradients, the assembled model, accounting and weight files.

pub mod accounting;
pub mod config;
pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;
pub mod weights;

pub use accounting::{count_flops, count_macs, count_params, layer_report, LayerCost, ModelReport};
pub use config::{KernelSize, ModelConfig, Stride};
pub use model::{Dctcrn, EstimateTape, StreamState, Tape};
pub use params::{param_specs, ParameterSet};
pub use tensor::Tensor;
pub use weights::{load_weights, load_weights_for, save_weights};
