use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("point outside the unit cube: {0}")]
    OutOfDomain(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measure is not normalized (total weight {0})")]
    Unnormalized(f64),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("finite-difference step {0} is below the 1e-4 floor")]
    StepUnderflow(f64),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
