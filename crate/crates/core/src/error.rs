use std::path::PathBuf;

/// Error type shared by every module in this crate.
///
/// The CLI maps variants onto exit codes, so the split between `Data` and
/// `Numeric` is part of the public contract: anything wrong with an input
/// file or an argument is a data problem; a non-finite value produced by an
/// otherwise valid computation is a numeric problem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frame {frame} out of range for a sequence of {num_frames} frames")]
    FrameOutOfRange { frame: usize, num_frames: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("data error in {path}: {message}")]
    DataFile { path: PathBuf, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
