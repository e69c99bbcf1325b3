//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("component mismatch: expected {expected} components, got {got}")]
    ComponentMismatch { expected: usize, got: usize },

    #[error("illegal exponent p = {0}: need 1 < p < infinity")]
    IllegalExponent(f64),

    #[error("unsupported (operator, norm) combination: {0}")]
    UnsupportedCombination(String),

    #[error("incompatible right-hand side: {0}")]
    IncompatibleRhs(String),

    #[error("scale undefined: {0}")]
    UndefinedScale(String),

    #[error("inadmissible lambda1: {0}")]
    InadmissibleLambda(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("problem size {got} exceeds oracle limit {limit}")]
    SizeLimit { got: usize, limit: usize },

    #[error("non-finite data: {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
