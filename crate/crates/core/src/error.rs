use thiserror::Error;

use crate::diagnostics::DiagnosticsReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "numerical failure: {message} (best estimate {estimate:e}, error bound {error_bound:e})"
    )]
    NumericalFailure {
        message: String,
        estimate: f64,
        error_bound: f64,
        samples: Vec<(f64, f64)>,
    },

    #[error("construction rejected: {}", .0.rejection_reason().unwrap_or("unspecified"))]
    Rejected(Box<DiagnosticsReport>),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, estimate: f64, error_bound: f64) -> Self {
        Error::NumericalFailure {
            message: message.into(),
            estimate,
            error_bound,
            samples: Vec::new(),
        }
    }
}
