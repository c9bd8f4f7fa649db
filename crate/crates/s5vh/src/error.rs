//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape-incompatible inputs to a tensor operation.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An operation received an input outside its domain (empty sequence,
    /// zero-norm vector, out-of-range index, ...).
    #[error("invalid input to `{op}`: {detail}")]
    InvalidInput { op: &'static str, detail: String },

    /// A computation produced NaN or infinity where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Malformed on-disk data (tensor files, code bitmaps, checkpoints).
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Manifest validation failure, naming the offending entry.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Bad or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidInput {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
