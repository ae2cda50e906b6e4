//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or scene description. The message names the
    /// offending key or quantity.
    #[error("config: {0}")]
    Config(String),

    /// A numerical invariant was violated (non-finite field value, divergent
    /// update, singular deconvolution, ...).
    #[error("numeric: {0}")]
    Numeric(String),

    /// A run/budget limit was exhausted before the work completed.
    #[error("budget: {0}")]
    Budget(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk artifact (tape, kernel file, raster, state file).
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
