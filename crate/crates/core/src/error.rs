use thiserror::Error;

/// Errors raised while constructing or analysing operators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("diagonal entries of B are (nearly) degenerate: min gap {min_gap:e} below {threshold:e}")]
    DegenerateB { min_gap: f64, threshold: f64 },

    #[error("epsilon has repeated values (classes {classes:?}); use the division-free constructors or reduce the degeneracy first")]
    DegenerateEpsilon { classes: Vec<Vec<usize>> },

    #[error("the coupling x must be non-zero for the secular equation")]
    ZeroX,

    #[error("operator is not symmetric: max |Q - Q^T| = {asymmetry:e}")]
    NonSymmetricInput { asymmetry: f64 },

    #[error("operator violates its {role} role: residual {residual:e}")]
    RoleViolation { role: &'static str, residual: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("time {t} outside the schedule window [0, {t_run}]")]
    TimeOutOfRange { t: f64, t_run: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("parameters lack the search structure: {0}")]
    NotSearchStructure(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidExperiment(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
