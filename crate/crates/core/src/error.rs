use thiserror::Error;

use crate::spin::SpinError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {message} ({diagnostics})")]
    Numerical { message: String, diagnostics: String },
    #[error("insufficient measurement set: {0}")]
    InsufficientMeasurements(String),
    #[error("ill-conditioned input: {0}")]
    Conditioning(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            diagnostics: diagnostics.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
