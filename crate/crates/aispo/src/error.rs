//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, sampling, and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input failed a structural or range check (dimensions, normalization,
    /// out-of-range constants). The message names the offending field.
    #[error("validation error: {0}")]
    Validation(String),

    /// An importance ratio was requested at a (state, action) pair where the
    /// behavior policy has zero probability.
    #[error("support violation: {0}")]
    Support(String),

    /// A computation produced a non-finite intermediate. The message carries
    /// enough context to locate the offending term.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A TOML document failed to parse or deserialize.
    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
