//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the inversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid configuration (bad grid, empty prior support, mismatched datasets, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A covariance matrix could not be factorized.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The k-th nearest neighbor coincides with the query point, so the
    /// density estimate is infinite. Perturb the forward outputs with
    /// observation error or reduce k.
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    /// Every candidate ended up with zero or degenerate likelihood.
    #[error("inference failure: {0}")]
    InferenceFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line tools:
    /// 2 for configuration problems, 4 for inference failure
    /// (all candidates degenerate), 3 for everything numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::InferenceFailure(_) => 4,
            _ => 3,
        }
    }
}
