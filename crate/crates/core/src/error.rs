use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid mismatch: left has n={left}, right has n={right}")]
    GridMismatch { left: usize, right: usize },
    #[error("non-finite drift value at step {step}{}", .detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    NonFiniteDrift { step: usize, detail: Option<String> },
    #[error("no piece accepted the candidate pre-image (coverage violation)")]
    CoverageViolation,
    #[error("{count} pieces accepted candidates that disagree beyond tolerance")]
    InconsistentPieces { count: usize },
    #[error("degenerate test function: E_nu[f^2] = {value} is not positive")]
    DegenerateFunction { value: f64 },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidArgument(msg.into())
}
