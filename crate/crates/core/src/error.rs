use thiserror::Error;

/// Errors produced by measure construction, solvers, and embedding arithmetic.
///
/// Variants split into two families: input errors (bad arguments, mismatched
/// references, infeasible preconditions) and numerical failures inside a
/// solver. Callers that need process exit codes can branch on
/// [`Error::is_input_error`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unbalanced total masses: {0} vs {1}")]
    Unbalanced(f64, f64),

    #[error("embedding reference mismatch: {0}")]
    ReferenceMismatch(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by a
    /// breakdown of the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
