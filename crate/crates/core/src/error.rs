use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CcsdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing configuration keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("backward pass reached unsupported op `{0}`")]
    UnsupportedBackward(&'static str),

    #[error("non-finite value in {tensor} at step {step}")]
    NonFinite { tensor: String, step: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),

    #[error("eigensolver did not converge: {0}")]
    Eigen(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CcsdError>;

impl CcsdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CcsdError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !($cond) {
            return Err($crate::error::CcsdError::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
