//! Error taxonomy shared across the engine.

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside its valid range (negative width, tau <= 0, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// NaN or infinity surfaced where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A run/pipeline configuration is inconsistent (missing teacher, bad ladder, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset contents violate a precondition (label out of range, empty set, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A serialized artifact (checkpoint, binary dataset, record) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A report cannot be assembled from the record directory.
    #[error("report error: {0}")]
    Report(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn report(msg: impl Into<String>) -> Self {
        Error::Report(msg.into())
    }
}
