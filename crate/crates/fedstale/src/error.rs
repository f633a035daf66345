//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Two vectors that must have equal lengths do not.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// An arithmetic result left the finite range.
    #[error("non-finite result in {context}")]
    NonFinite { context: String },

    /// An input is outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration key or value failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A binary dataset file is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Paired dataset files disagree with each other.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A simulation precondition was violated at runtime.
    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
