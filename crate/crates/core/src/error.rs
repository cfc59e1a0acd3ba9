use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite coordinate {value} in dimension {dim}")]
    NonFinite { dim: usize, value: f64 },

    #[error("cell index {index} out of range for {cells} cells")]
    CellOutOfRange { index: usize, cells: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("sensor {sensor} is {distance} m from the reference antenna (minimum {min})")]
    TooCloseToReference { sensor: usize, distance: f64, min: f64 },

    #[error("query point ({x}, {y}) is closer than {min} m to the reference antenna")]
    QueryTooClose { x: f64, y: f64, min: f64 },

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("covariance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("degenerate likelihood: every cell underflows (max log-likelihood {max_log})")]
    DegenerateLikelihood { max_log: f64 },

    #[error("path enumeration needs {paths} paths, budget is {budget}")]
    EnumerationBudget { paths: f64, budget: usize },

    #[error("{0}")]
    Invalid(String),
}
