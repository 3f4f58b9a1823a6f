use std::path::PathBuf;

/// Errors raised by the detection and stitching pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or corrupt image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pixel ({row}, {col}) is outside the valid gradient interior of a {nr}x{nc} image")]
    Boundary {
        row: usize,
        col: usize,
        nr: usize,
        nc: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("registration failed: {0}")]
    RegistrationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
