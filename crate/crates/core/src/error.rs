use thiserror::Error;

/// Errors raised by the cnoidal library.
///
/// `Domain` covers every out-of-range input. `Consistency` marks a failed
/// cross-check between two independent computations of the same quantity
/// and is never expected at sane resolutions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CnoidalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("eigensolver failed to converge for a {0}x{0} matrix")]
    EigenFailure(usize),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("consistency failure: {0}")]
    Consistency(String),
    #[error("blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },
}

impl CnoidalError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CnoidalError::Domain(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        CnoidalError::Consistency(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CnoidalError>;
