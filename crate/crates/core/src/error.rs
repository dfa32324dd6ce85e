use crate::dynamics::SimState;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the library. The CLI maps these onto
/// short machine-parsable error classes; tests match on variants.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("non-finite value in {context} at flat index {index} (value {value})")]
    NonFinite {
        context: &'static str,
        index: usize,
        value: f64,
    },

    #[error("grid mismatch between operands: {0}")]
    GridMismatch(String),

    #[error("invalid parameter {name}: {constraint}")]
    InvalidParameter { name: String, constraint: String },

    #[error("invalid criterion (kind {kind}, p = {p}, s = {s}): violates {violated}")]
    InvalidCriterion {
        kind: String,
        p: f64,
        s: f64,
        violated: String,
    },

    #[error("history: {0}")]
    History(String),

    #[error("divergence detected at t = {t}")]
    Divergence { t: f64, last_valid: Box<SimState> },

    #[error("stationary solve did not converge: residual {residual} after {iterations} iterations")]
    NonConverged {
        residual: f64,
        iterations: usize,
        best: Box<crate::dynamics::StationaryOutcome>,
    },

    #[error("config: {key}: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable one-word class used by the CLI for exit reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Grid(_) | Error::GridMismatch(_) => "grid",
            Error::NonFinite { .. } => "non-finite",
            Error::InvalidParameter { .. } => "parameter",
            Error::InvalidCriterion { .. } => "criterion",
            Error::History(_) => "history",
            Error::Divergence { .. } => "divergence",
            Error::NonConverged { .. } => "non-converged",
            Error::Config { .. } => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}
