use std::path::PathBuf;

/// Every failure the engine can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Validation(String),

    #[error("failed to decode {path}: {reason}")]
    Decode { path: String, reason: String },

    #[error("unsupported image format in {path}")]
    UnsupportedFormat { path: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("dataset layout error under {root}: {reason}")]
    Layout { root: PathBuf, reason: String },

    #[error("dataset under {0} contains no images")]
    EmptyDataset(PathBuf),

    #[error("training diverged at epoch {epoch}: mean loss is {loss}")]
    Diverged { epoch: usize, loss: f32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
