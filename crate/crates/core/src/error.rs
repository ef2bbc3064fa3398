use std::io;

/// Errors raised by the numerics, PolSAR and contourlet layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class}: covariance is not Hermitian positive semidefinite ({reason})")]
    NotPsd { class: usize, reason: String },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn shape(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }

    /// Stable numeric code per failure class, used by the CLI exit status.
    pub fn code(&self) -> u8 {
        match self {
            Error::Shape { .. } => 10,
            Error::InvalidArgument(_) => 11,
            Error::NotPsd { .. } => 12,
            Error::BadMagic { .. } => 20,
            Error::Truncated { .. } => 21,
            Error::Dimension(_) => 22,
            Error::Io(_) => 30,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
