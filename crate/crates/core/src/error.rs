use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input values (negative mass, non-finite entry, bad config, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Shapes or supports do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The problem has no feasible point (e.g. marginal sums differ).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical routine failed (Cholesky on an indefinite matrix, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative routine hit its cap without meeting its tolerance.
    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
