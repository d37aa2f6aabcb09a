use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the decoding stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("token id {token} is out of range for a vocabulary of size {size}")]
    TokenOutOfRange { token: u32, size: usize },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("vocabulary mismatch: small model has {small}, large model has {large}")]
    VocabMismatch { small: String, large: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
