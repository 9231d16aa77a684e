use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix is not positive semi-definite (lambda_min = {lambda_min:e})")]
    NotPsd { lambda_min: f64 },
    #[error("range condition violated: residual {residual:e}")]
    RangeViolation { residual: f64 },
    #[error("factor mismatch: |Theta Theta^T - Sigma|_F = {residual:e}")]
    FactorMismatch { residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("matrix M is singular or ill-conditioned (condition number {cond:e})")]
    SingularM { cond: f64 },
    #[error("component means are not all zero")]
    NonCenteredMeans,
    #[error("invalid Gamma witness: {0}")]
    InvalidGamma(String),
    #[error("both covariance matrices are singular")]
    BothSingular,
    #[error("bracket does not separate verdicts: {0}")]
    BracketNotSeparating(String),
    #[error("implication chain violated: {0}")]
    ChainViolation(String),
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
