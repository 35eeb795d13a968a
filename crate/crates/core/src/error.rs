use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("point {t} lies outside the domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("design matrix is rank deficient for basis size {basis_size} (rank {rank})")]
    RankDeficient { basis_size: usize, rank: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("truncation level {requested} is not admissible: {reason}")]
    Truncation { requested: usize, reason: String },

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("kernel Gram matrix is degenerate: {0}")]
    KernelDegeneracy(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("size limit exceeded: {0}")]
    Size(String),
}

impl Error {
    /// True for errors caused by bad user input or configuration rather than
    /// by a numerical breakdown during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::EstimationFailure(_)
                | Error::KernelDegeneracy(_)
                | Error::RankDeficient { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
