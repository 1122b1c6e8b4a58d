//! Error type shared across the crate.
//!
//! Errors are grouped into three coarse categories that the CLI maps onto
//! process exit codes: input/validation problems, numeric failures discovered
//! mid-computation, and resource guards (state-space blowups).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input: schemas, datasets, model
    /// specifications, configuration files, or incompatible arguments.
    #[error("validation error: {0}")]
    Validation(String),

    /// A computation produced a non-finite or otherwise unusable value
    /// (singular solve, non-finite influence value, failed convergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A guard refused to start a computation that would exhaust resources,
    /// e.g. enumerating a discrete state space past the hard cap.
    #[error("resource guard: {0}")]
    Resource(String),

    /// Underlying I/O failure while reading or writing files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
            Error::Resource(_) => 4,
        }
    }

    /// Shorthand constructor for validation errors.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand constructor for numeric errors.
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Shorthand constructor for resource-guard errors.
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
