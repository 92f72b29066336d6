//! Error types shared across the crate.
//!
//! The CLI maps these onto exit codes: configuration-class errors exit
//! with 2, numerical/oracle failures with 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameter combination (grid sizes, family parameters, flags).
    #[error("configuration error: {0}")]
    Config(String),

    /// The operation is not defined for the given drift family.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The adaptive quadrature oracle failed to converge.
    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// A factorization or matrix invariant failed.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A declared bound was violated at a visited state.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Config(_)
            | Error::Unsupported(_)
            | Error::ContractViolation(_) => 2,
            Error::OracleFailure(_) | Error::NumericalFailure(_) | Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
