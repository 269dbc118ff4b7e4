use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error in frame {frame}: {message}")]
    Schema { frame: usize, message: String },

    #[error("frame {frame}: timestamp {timestamp} does not increase over the previous frame")]
    Ordering { frame: usize, timestamp: f64 },

    #[error("keypoint {keypoint} has no sample above the confidence threshold")]
    UnrecoverableGap { keypoint: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("track too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("track of {len} samples is shorter than one window of {window} samples")]
    EmptyWindowSet { len: usize, window: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("version mismatch: {0}")]
    Version(String),

    #[error("leakage: held-out subject {subject} appears in {stage}")]
    Leakage { subject: String, stage: String },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Path {
            path: path.into(),
            source,
        }
    }
}
