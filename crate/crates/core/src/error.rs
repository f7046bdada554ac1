use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("negative entry {value} cannot be raised to fractional power {power}")]
    NegativeEntry { value: f64, power: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("Gaussian positivity violated: {0}")]
    GaussianInfeasible(String),

    #[error("enumeration budget exceeded: {states} states > {budget}")]
    BudgetExceeded { states: f64, budget: f64 },

    #[error("constraint set is empty (radius too small?)")]
    EmptyConstraintSet,

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
