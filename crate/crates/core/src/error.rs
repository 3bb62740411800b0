use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid fabric: {0}")]
    InvalidFabric(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid traffic matrix: {0}")]
    InvalidTraffic(String),
    #[error("similarity undefined for an all-zero matrix")]
    UndefinedSimilarity,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unroutable pairs: {pairs:?}")]
    Unroutable { pairs: Vec<(usize, usize)> },
    #[error("instance exceeds cap: {0}")]
    CapExceeded(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("optimality loss undefined: fractional throughput is zero")]
    UndefinedLoss,
}
