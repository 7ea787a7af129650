use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KmlpError>;

#[derive(Debug, Error)]
pub enum KmlpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The linear system could not be solved; `condition` is the ratio of
    /// extreme eigenvalues of the system matrix (infinite when singular).
    #[error("singular system ({context}), condition estimate {condition:e}")]
    Singular { context: String, condition: f64 },

    #[error("training diverged in layer {layer} at epoch {epoch}: non-finite parameters")]
    Divergence { layer: usize, epoch: usize },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KmlpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KmlpError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        KmlpError::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KmlpError::Io {
            path: path.into(),
            source,
        }
    }
}
