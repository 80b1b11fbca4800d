use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MmnError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("law has no density: {0}")]
    NoDensity(String),
    #[error("tilted density is not normalizable: {0}")]
    NonNormalizable(String),
    #[error("operation not supported: {0}")]
    Capability(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("perturbation direction is zero")]
    DegenerateDirection,
    #[error("unsupported covariance structure: {0}")]
    UnsupportedCovariance(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("integration window clips {mass:e} of probability mass")]
    Window { mass: f64 },
    #[error("{bad} of {n} replicates produced non-finite log-ratios")]
    Contaminated { bad: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, MmnError>;

pub(crate) fn domain(msg: impl Into<String>) -> MmnError {
    MmnError::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> MmnError {
    MmnError::InvalidParameter(msg.into())
}
