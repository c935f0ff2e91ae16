use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// A linear system could not be factored, even after the jitter retry.
    #[error("numerical failure: {msg} (reciprocal condition estimate {rcond:.3e})")]
    Numerical { msg: String, rcond: f64 },

    /// A closed-form bound was asked for outside the regime where its logarithm is positive.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "constraint infeasible: achieved penalty {achieved:.6e} exceeds tau {tau:.6e} at mu_max"
    )]
    Infeasible { achieved: f64, tau: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Parse { .. } => "parse",
            Error::Numerical { .. } => "numerical",
            Error::Domain(_) => "domain",
            Error::Infeasible { .. } => "infeasible",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
