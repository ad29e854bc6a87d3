use thiserror::Error;

/// Errors raised by the library layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EoiError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("state {index} is not normalized (norm^2 - 1 = {deviation:.3e})")]
    NotNormalized { index: usize, deviation: f64 },

    #[error("matrix is not Hermitian (max |H - H^dagger| = {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("columns are not orthonormal (max deviation {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("{count} columns do not fit in dimension {dimension}")]
    TooManyColumns { count: usize, dimension: usize },

    #[error("rank deficient at state {index} (pivot {pivot:.3e})")]
    RankDeficient { index: usize, pivot: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("target and frame Gram matrices differ (residual norm {residual:.3e})")]
    GramMismatch { residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, EoiError>;
