use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside chart domain: {0}")]
    Domain(String),
    #[error("invalid density weight: {0}")]
    Weight(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("refinement required: {0}")]
    Refinement(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Errors that mean the standing assumptions on the geometry do not hold at the
    /// data, as opposed to bad input or a failed check.
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, Error::Hypothesis(_) | Error::Refinement(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
