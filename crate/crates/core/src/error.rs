use thiserror::Error;

/// Errors produced by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("ray step {dt_ray} is not below the smallest region width {min_width}")]
    StepTooCoarse { dt_ray: f64, min_width: f64 },

    #[error("time step {dt} violates the leapfrog CFL bound; admissible dt <= {max_dt}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("eigensolver did not converge; worst residual {worst_residual:e} (residuals {residuals:?})")]
    EigenNonConvergence {
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("size {requested} exceeds the limit {limit}")]
    LimitExceeded { requested: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
