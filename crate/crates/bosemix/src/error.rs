use thiserror::Error;

use crate::meanfield::MinimizationReport;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cannot normalize a field with zero L2 norm")]
    ZeroNorm,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("orbital is not normalized (L2 norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("minimisation hit the iteration cap after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    IterationCap(Box<MinimizationReport>),

    #[error("Fock basis dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
