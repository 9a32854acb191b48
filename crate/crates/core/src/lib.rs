//! Real-time monaural speech enhancement in the cosine domain.
//!
//! A noisy 16 kHz waveform is framed with a Hann window, taken to the
//! orthonormal DCT domain, and fed frame by frame to a causal
//! convolutional-recurrent network that predicts a real-valued mask. The
//! masked spectrum is inverted and overlap-added back to a waveform.
//!
//! - [`transform`], [`signal`]: DCT plans, framing, windows, WAV I/O.
//! - [`masking`]: the ideal cosine mask, output activations, magnitude clip.
//! - [`nn`]: the network, its hand-written backward pass, weight files and
//!   parameter/FLOP accounting.
//! - [`objective`], [`train`], [`datagen`]: SI-SNR, Adam training with
//!   dynamic mixing.
//! - [`stream`]: hop-by-hop sessions, file enhancement, RTF benchmark.
//! - [`gradcheck`]: finite-difference checks of every backward pass.
//!
//! ```
//! use std::sync::Arc;
//! use dctcrn::nn::{Dctcrn, ModelConfig};
//! use dctcrn::stream::{EnhancerSession, ModelMasker};
//!
//! let model = Arc::new(Dctcrn::init(ModelConfig::tiny(), 0).unwrap());
//! let params = model.frame_params();
//! let mut session = EnhancerSession::new(ModelMasker::new(model), params).unwrap();
//! let hop = vec![0.0; params.hop];
//! for _ in 0..4 {
//!     assert!(session.push_hop(&hop).unwrap().is_none());
//! }
//! assert_eq!(session.push_hop(&hop).unwrap().unwrap().len(), params.hop);
//! ```

pub mod datagen;
pub mod error;
pub mod gradcheck;
mod linalg;
pub mod masking;
pub mod nn;
pub mod objective;
pub mod signal;
pub mod stream;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
pub use nn::{Dctcrn, ModelConfig};
pub use stream::{EnhancerSession, ModelMasker};
