use std::io;

use thiserror::Error;

/// Errors raised anywhere in the recognition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input parsed fine but violates a data invariant (time order, length, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A persisted file (dataset or model) is malformed or of the wrong kind.
    #[error("format error: {0}")]
    Format(String),

    /// Attitude could not be estimated from the given specific force.
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
