use thiserror::Error;

/// Errors raised by the channel generator, rate evaluation and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A factorization or iteration could not be carried out reliably.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A configuration violates protocol constraints.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    /// The conic subproblem solver did not return an optimal point.
    #[error("conic solver: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
