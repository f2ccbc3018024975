use alloc::string::String;

/// Errors raised by the oracle, the QP engine and the outer loops.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("component index {index} out of range for {count} components")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("non-finite value while evaluating {what}")]
    NonFinite { what: &'static str },
    #[error("operation requires a finite-sum problem, got a streaming oracle")]
    StreamingUnsupported,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quadratic program is degenerate: {0}")]
    DegenerateQp(&'static str),
    #[error("quadratic program failed at iteration {iteration}: kkt residual {residual:e}")]
    QpFailed { iteration: u64, residual: f64 },
    #[error("problem too large for exhaustive enumeration (d = {dim}, m = {constraints})")]
    SizeLimit { dim: usize, constraints: usize },
    #[error("constraint set is empty for tolerance r = {r}; smallest attained r is {minimal_r}")]
    Infeasible { r: f64, minimal_r: f64 },
    #[error("reference solve did not converge within {iterations} iterations")]
    NoConvergence { iterations: u64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
