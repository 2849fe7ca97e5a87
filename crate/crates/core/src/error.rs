use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh inversion: triangle {triangle} has signed area {area:e}")]
    MeshInversion { triangle: usize, area: f64 },

    #[error("invalid coefficient {value:e} on triangle {triangle}")]
    InvalidCoefficient { triangle: usize, value: f64 },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("line search failed after {trials} trials (last step {last_step:e})")]
    LineSearchFailure { trials: usize, last_step: f64 },

    #[error("non-finite cost encountered")]
    NonFiniteCost,

    #[error("degenerate topological derivative (zero norm)")]
    DegenerateDerivative,

    #[error("level set is antipodal to the topological derivative")]
    AntipodalLevelSet,

    #[error("quality lock: step underflow, blocking triangle {triangle} (quality {quality:e})")]
    QualityLock { triangle: usize, quality: f64 },

    #[error("parameter extraction failed (misalignment gradient {gradient_norm:e})")]
    ExtractionFailure { best: Vec<f64>, gradient_norm: f64 },

    #[error("space mapping step failed: {0}")]
    StepFailure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
