//! Error type shared across the crate.
//!
//! The CLI maps variants onto process exit codes: configuration problems
//! exit 2, violated preconditions exit 3, numerical failures exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvitError {
    /// Invalid input data or arguments (dimension mismatches, out-of-range values).
    #[error("validation error: {0}")]
    Validation(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Bad or missing configuration, including missing stage artifacts.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine failed beyond recovery (factorisation, eigensolve).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl EvitError {
    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvitError::Precondition(_) => 3,
            EvitError::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvitError>;
