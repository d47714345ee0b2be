//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A function produced a non-finite value where a finite one is required.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Dataset generation produced no usable samples.
    #[error("generation error: {0}")]
    Generation(String),

    /// Feature normalization is impossible (e.g. an all-zero part).
    #[error("normalization error: {0}")]
    Normalization(String),

    /// A serialized file has the wrong magic, version, or layout.
    #[error("format error: {0}")]
    Format(String),

    /// Training aborted because the loss became non-finite.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
