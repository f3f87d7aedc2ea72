//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation
    /// (nonpositive dosage under a log, temperature below absolute zero, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally valid input that carries no usable information
    /// (all-zero spectrum, empty measurement window, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A query beyond the recorded range of a series.
    #[error("extrapolation: {0}")]
    Extrapolation(String),

    /// Inconsistent or invalid configuration (bad bin width, level outside
    /// (0,1), missing required input, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Data required to be complete still contains gaps.
    #[error("missing data: {0}")]
    MissingData(String),

    /// Imputation could not fill one or more gaps; the offending
    /// timestamps are listed.
    #[error("imputation failed for {} record(s), first at {}", .timestamps.len(), .timestamps.first().map(String::as_str).unwrap_or("?"))]
    Imputation { timestamps: Vec<String> },

    /// A file did not match its declared schema.
    #[error("{path}:{line}: {msg}")]
    Schema { path: String, line: u64, msg: String },

    /// The design does not identify the requested model.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    /// The optimizer stopped without satisfying its convergence criteria.
    #[error("did not converge: {context} (iterations {iterations}, |grad| {grad_norm:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        grad_norm: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn schema(path: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
