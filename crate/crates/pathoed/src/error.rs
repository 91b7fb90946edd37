//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix factorization failed (singular or structurally broken input).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// An iterative solver did not reach its tolerance.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// A non-finite value surfaced where a finite one is required.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// Configuration file could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
