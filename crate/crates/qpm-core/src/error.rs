//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum QpmError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("bad weights: {0}")]
    BadWeights(String),

    #[error("empty support: at least one sample point is required")]
    EmptySupport,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("bad distance grid: {0}")]
    BadGrid(String),

    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e})")]
    NonSymmetric { max_asym: f64 },

    #[error("eigenvalue sum drifted from zero: |{sum:.3e}| exceeds {tol:.0e}")]
    SpectralDrift { sum: f64, tol: f64 },

    #[error("kernel family has no closed-form square root")]
    SqrtKernelUnavailable,

    #[error("gradients are unavailable on the general-eigensolver fallback path")]
    FallbackPathNoGradient,

    #[error("metric is not differentiable here: {0}")]
    NondifferentiablePoint(String),

    #[error("truncated basis dimension {dim} exceeds the limit {max}")]
    CutoffTooLarge { dim: usize, max: usize },

    #[error("the dense trace-distance oracle requires a Gaussian base kernel")]
    NonGaussianBase,
}

pub type Result<T> = std::result::Result<T, QpmError>;
