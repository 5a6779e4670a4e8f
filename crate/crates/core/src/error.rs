use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

/// Why a trial was abandoned.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("correlation {value} at index {index} lies outside [-1, 1]")]
    CorrelationRange { index: usize, value: f64 },
    #[error("{what} is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPsd { what: &'static str, min_eigenvalue: f64 },
    #[error("{what} is not symmetric")]
    NotSymmetric { what: &'static str },
    #[error("cross-task correlation must have unit diagonal")]
    CrossDiagonal,
    #[error("feature covariance is not symmetric positive definite")]
    NotSpd,
    #[error("noise level must be finite and non-negative, got {0}")]
    Noise(f64),
    #[error("delimiters require contextual vectors")]
    MissingContexts,
    #[error("expected {expected} contextual vectors, got {found}")]
    ContextCount { expected: usize, found: usize },
    #[error("value-vector readout needs a prediction head")]
    MissingHead,
    #[error("model has no construction attached, cannot read out a prediction")]
    NoConstruction,
    #[error("gate product {row},{col} is exactly zero and cannot be divided by")]
    ZeroGate { row: usize, col: usize },
    #[error("task-query correlation has no mass on nonzero eigenvalues of R")]
    DegenerateCorrelation,
    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
    #[error("{segments} segments need at least {needed} contextual dimensions, have {p}")]
    ContextDimension { segments: usize, needed: usize, p: usize },
    #[error("fixed-point iteration did not converge after {iterations} steps (residual {residual})")]
    FixedPoint { iterations: usize, residual: f64 },
    #[error("target weights must lie in [0, 1]{0}")]
    TargetRange(&'static str),
    #[error("contextual vectors are linearly dependent")]
    DependentContexts,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("eigendecomposition failed for {0}")]
    Eigen(&'static str),
    #[error("every trial diverged")]
    AllDiverged(Vec<TrialFailure>),
}
