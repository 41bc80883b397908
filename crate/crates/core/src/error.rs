use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("eigenvalue root bracketing failed for index {index}")]
    RootBracketing { index: usize },
    #[error("requested energy fraction {target} exceeds {reachable} reachable with {budget} modes per axis; increase the mode budget")]
    EnergyUnreachable {
        target: f64,
        reachable: f64,
        budget: usize,
    },
    #[error("linear solver did not converge at step {step} (relative residual {residual:e})")]
    SolverDivergence { step: usize, residual: f64 },
    #[error("non-finite loss at point {index}")]
    NonFinitePoint { index: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("evaluation failed for realization {index}: {message}")]
    Realization { index: usize, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
