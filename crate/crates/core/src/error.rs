use thiserror::Error;

/// Errors produced by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis} out of range for a {dims}-dimensional grid")]
    AxisOutOfRange { axis: usize, dims: usize },

    #[error("grid too small: axis {axis} has {len} nodes, operation needs {needed}")]
    GridTooSmall {
        axis: usize,
        len: usize,
        needed: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("matrix shapes do not match: {0}")]
    ShapeMismatch(String),

    #[error("initial matrix is singular (|det| = {det:.3e})")]
    SingularInitial { det: f64 },

    #[error("parameter {name} must be non-zero")]
    ZeroParameter { name: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("seed is not a verified solution: {check} = {value:.3e} exceeds {tol:.1e}")]
    NotASolution {
        check: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("degenerate data on {count} of {total} nodes ({context})")]
    Degenerate {
        count: usize,
        total: usize,
        context: String,
    },

    #[error("rational loop evaluated at its pole {0}")]
    PoleEvaluation(String),

    #[error("projection construction failed: {0}")]
    ProjectionFailure(String),

    #[error("resampling point {point:?} lies outside the source domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
