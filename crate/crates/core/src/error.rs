use thiserror::Error;

/// Failures raised while evaluating problem data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("x[{index}] = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite output from {0}")]
    EvaluationFailure(&'static str),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Failures of the QP layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("interior-point method stalled after {iterations} iterations (residual {residual:.3e})")]
    NumericalFailure { iterations: usize, residual: f64 },
    #[error("invalid subproblem: {0}")]
    InvalidSubproblem(String),
}

/// Top-level solver error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("line search exhausted after {halvings} halvings (beta = {beta:.3e})")]
    LineSearchExhausted { halvings: usize, beta: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}
