use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("divergence after projection is {residual:e}, above tolerance {tol:e}")]
    Divergence { residual: f64, tol: f64 },

    #[error("nonlinear iteration did not converge after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },

    #[error("time step {k} violates the gate {gate} = {bound:e}")]
    Gate { k: f64, gate: &'static str, bound: f64 },

    #[error("index {index} out of range (length {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty set")]
    EmptySet,

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
