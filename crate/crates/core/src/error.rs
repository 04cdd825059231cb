//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by dataset construction, covariance assembly, inference,
/// and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix shapes disagree (e.g. kernel arguments of unequal
    /// length, weight vectors that do not match the input dimension).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Data values violate a domain contract (inputs outside the unit cube,
    /// non-positive fidelities, duplicated design rows, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A configuration value is out of range or inconsistent with the chosen
    /// emulator (negative variance, wrong kernel for the model, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The covariance matrix could not be factorized even at the maximum
    /// permitted jitter. Usually caused by duplicated or near-duplicated
    /// design points.
    #[error("covariance factorization failed: {0}")]
    SingularCovariance(String),

    /// Estimation could not produce a usable result (all restarts failed,
    /// degenerate responses, ...).
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A file had an unexpected layout (CSV header mismatch, wrong column
    /// count, unparseable field).
    #[error("malformed file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
