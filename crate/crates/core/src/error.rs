use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum QktError {
    #[error("invalid spin count N={0}: must be an even integer >= 2")]
    InvalidSpinCount(usize),

    #[error("matrix is not Hermitian: max |H - H^dagger| = {deviation:e} (tolerance {tol:e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("resonance integers r={r}, s={s} must be positive and coprime")]
    NotCoprime { r: u64, s: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable integration: gamma*N*h = {value:.4} exceeds {limit} (use at least {min_substeps} substeps)")]
    StepSizeGuard { value: f64, limit: f64, min_substeps: usize },

    #[error("positivity violated at step {step}: min eigenvalue {min_eigenvalue:e}; reduce the step size (substeps={substeps})")]
    PositivityViolation {
        step: u64,
        min_eigenvalue: f64,
        substeps: usize,
    },

    #[error("norm drift {drift:e} after {steps} steps exceeds the unitarity budget")]
    NormDrift { drift: f64, steps: u64 },

    #[error("power-law fit needs at least 3 points in range, got {0}")]
    InsufficientPoints(usize),

    #[error("power-law fit requires positive data, found {0}")]
    NonPositive(f64),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("sweep point {variable}={value} failed: {source}")]
    SweepPoint {
        variable: String,
        value: f64,
        #[source]
        source: Box<QktError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QktError {
    /// True for failures of the numerical-integrity guards (positivity,
    /// unitarity, decomposition failures) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            QktError::PositivityViolation { .. }
            | QktError::NormDrift { .. }
            | QktError::Linalg(_) => true,
            QktError::SweepPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<ndarray_linalg::error::LinalgError> for QktError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        QktError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QktError>;
