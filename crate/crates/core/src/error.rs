use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the labelling / training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported audio format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("anchor fit failed: {0}")]
    AnchorFit(String),

    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),

    #[error("invalid bias table: {0}")]
    BiasTable(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale activation cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("class index {index} out of range for `{head}` head with {classes} classes")]
    ClassIndex { head: &'static str, index: usize, classes: usize },

    #[error("split failed: {0}")]
    Split(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    NonFinite { epoch: usize, step: usize, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from bad user input rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFinite { .. } | Error::StaleCache | Error::Shape(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
