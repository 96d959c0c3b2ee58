//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: String, detail: String },

    #[error("invalid argument in {op}: {detail}")]
    InvalidArgument { op: String, detail: String },

    #[error("non-finite value produced by {op}: {detail}")]
    NonFinite { op: String, detail: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate threshold in layer {layer}: max pre-activation {value}")]
    DegenerateThreshold { layer: usize, value: f64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("image format error: {0}")]
    ImageFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op: op.to_string(),
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op: op.to_string(),
            detail: detail.into(),
        }
    }

    pub fn non_finite(op: &str, detail: impl Into<String>) -> Self {
        Error::NonFinite {
            op: op.to_string(),
            detail: detail.into(),
        }
    }
}
