use thiserror::Error;

/// Errors raised by the numeric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MiraError {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("support mismatch at ({row}, {col}): w > 0 where p = 0")]
    SupportMismatch { row: usize, col: usize },

    #[error("degenerate marginal: entry {col} is zero but column {col} of P has mass")]
    DegenerateMarginal { col: usize },

    #[error("point is on the simplex boundary at ({row}, {col}); an interior point is required")]
    Domain { row: usize, col: usize },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("non-positive entry at ({row}, {col}); a strictly positive kernel is required")]
    NonPositiveKernel { row: usize, col: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("logit and fused-kernel paths disagree by {0:e}")]
    PathDisagreement(f64),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MiraError>;

pub(crate) fn param_err(name: &'static str, reason: impl Into<String>) -> MiraError {
    MiraError::Parameter {
        name,
        reason: reason.into(),
    }
}
