use thiserror::Error;

/// Errors raised by the bridge laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model has no transition density registered for this operation")]
    MissingDensity,
    #[error("time {0} is at or beyond the terminal time 1")]
    TimeAtTerminal(f64),
    #[error("noise scale must be strictly positive for this operation")]
    ZeroNoise,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("control grid does not match the simulation grid")]
    GridMismatch,
    #[error("diffusion matrix is singular at t = {0}")]
    SingularDiffusion(f64),
    #[error("problem size {size} exceeds the configured cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },
    #[error("point is not an atom of the marginal support")]
    OffSupport,
    #[error("sinkhorn did not converge after {iterations} iterations (marginal error {error:e})")]
    NoConvergence { iterations: usize, error: f64 },
    #[error("every importance weight underflowed; try the controlled estimator")]
    DegenerateSample,
    #[error("control energy {energy} exceeds the budget {budget}")]
    BudgetExceeded { energy: f64, budget: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
