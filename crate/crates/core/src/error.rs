//! Error type shared by all modules.
use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit class.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input (bad arguments, violated preconditions).
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical tolerance or convergence check failed.
    #[error("numeric tolerance failure: {0}")]
    Numeric(String),
    /// Exact integer arithmetic would overflow the fixed-width type.
    #[error("integer overflow: {0}")]
    Overflow(String),
    /// A cached table failed its integrity check.
    #[error("cache corruption: {0}")]
    Cache(String),
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization failure.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result alias for library operations.
pub type Result<T> = std::result::Result<T, Error>;
