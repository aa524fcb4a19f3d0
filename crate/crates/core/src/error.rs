use thiserror::Error;

use crate::poisson::StateTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("expected {expected} samples, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("state tag mismatch: expected {expected:?}, found {found:?}")]
    TagMismatch { expected: StateTag, found: StateTag },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("ion density fell to {min_density:e}, below the positivity floor")]
    PositivityLost { min_density: f64 },

    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
}
