use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("cannot decode image {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("integrity error in field `{field}`: {reason}")]
    Integrity { field: String, reason: String },

    #[error("config fingerprint mismatch: checkpoint has {found}, expected {expected}")]
    Fingerprint { expected: String, found: String },

    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFinite { step: u64, diagnostic: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn integrity(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Integrity {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
