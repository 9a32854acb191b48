use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("WAV error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported sample rate {0} Hz (only 16000 Hz mono audio is accepted)")]
    UnsupportedSampleRate(u32),

    #[error("unsupported channel count {0} (only mono audio is accepted)")]
    UnsupportedChannels(u16),

    #[error("unsupported sample encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("reference signal is identically zero")]
    ZeroReference,

    #[error("signal is silent (power {power:e} below 1e-12): {what}")]
    SilentSignal { what: &'static str, power: f64 },

    #[error("bad magic bytes in weight file")]
    BadMagic,

    #[error("unsupported weight file version {0}")]
    VersionMismatch(u32),

    #[error("weight file checksum failure (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed weight file: {0}")]
    MalformedWeights(String),

    #[error("unknown tensor `{0}` in weight file")]
    UnknownTensor(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss (batch seed {seed})")]
    NonFiniteLoss { seed: u64 },

    #[error("manifest error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("empty manifest")]
    EmptyManifest,

    #[error("chunk must be exactly {expected} samples, got {got}")]
    ChunkSize { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn wav(path: impl Into<PathBuf>, source: hound::Error) -> Self {
        Error::Wav {
            path: path.into(),
            source,
        }
    }
}
