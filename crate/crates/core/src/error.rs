use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input dimension {0} out of range (expected 1..=3)")]
    Dimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("sobol counter overflow: requested index {0} exceeds 2^32")]
    CounterOverflow(u64),

    #[error("role {role} is not valid for problem {problem}")]
    InvalidRole { role: String, problem: String },

    #[error("checksum mismatch in {path}: stored {stored}, computed {computed}")]
    Checksum {
        path: PathBuf,
        stored: String,
        computed: String,
    },

    #[error("incompatible reports: {0}")]
    Incompatible(String),

    #[error("environment refused: {0}")]
    Environment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
