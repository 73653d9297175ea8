use thiserror::Error;

use crate::model::PrecisionEstimate;

pub type Result<T, E = PrecisError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PrecisError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// EM hit its iteration cap. The best iterate is carried so callers can keep it.
    #[error("EM did not converge after {iterations} iterations (last max change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        best: Box<PrecisionEstimate>,
    },

    #[error("no iterates left to average after burn-in")]
    EmptyAverage,

    #[error("AUC undefined: truth adjacency has a single class")]
    SingleClass,

    #[error("every tuning grid cell failed")]
    AllCellsFailed,

    #[error("features with zero variance: {}", .0.join(", "))]
    ZeroVarianceFeature(Vec<String>),

    #[error("raw intensities are required when the intensity filter is enabled")]
    MissingRawIntensities,

    #[error("IRO iteration {iteration} failed: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<PrecisError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PrecisError {
    /// True for failures that signal broken numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            PrecisError::NotPositiveDefinite { .. } => true,
            PrecisError::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self, PrecisError::NonConvergence { .. })
    }
}

pub(crate) fn dim_mismatch(what: &str, expected: usize, got: usize) -> PrecisError {
    PrecisError::DimensionMismatch(format!("{what}: expected {expected}, got {got}"))
}
