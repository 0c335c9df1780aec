use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate homography: {0}")]
    DegenerateHomography(String),

    #[error("degenerate template: maximum intensity is {0}")]
    DegenerateTemplate(f64),

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable numeric code, shared with the C interface and used as the process exit status.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::DegenerateHomography(_) => 3,
            Error::DegenerateTemplate(_) => 4,
            Error::NonFinite(_) => 5,
            Error::Format { .. } => 6,
            Error::FrameMismatch(_) => 7,
            Error::Io { .. } => 8,
            Error::Image { .. } => 9,
        }
    }
}
