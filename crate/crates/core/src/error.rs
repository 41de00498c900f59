use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unsupported channel `{name}`")]
    UnsupportedChannel { line: usize, name: String },

    #[error("motion has {frames} frames after resampling, need at least {needed}")]
    TooShort { frames: usize, needed: usize },

    #[error("source rate {source_fps:.3} fps cannot be decimated to {target_fps} fps")]
    FpsMismatch { source_fps: f64, target_fps: u32 },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("clip length {0} is not divisible by 4")]
    BadLength(usize),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("unknown joint `{joint}` in part `{part}`")]
    UnknownJoint { part: String, joint: String },

    #[error("body part `{0}` has no joints")]
    EmptyPart(String),

    #[error("embedding dimension {0} must be even and at least 2")]
    OddDim(usize),

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("velocity range is degenerate (min {min}, max {max})")]
    DegenerateStats { min: f64, max: f64 },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("evaluation pairs do not line up: {0}")]
    PairMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    InFile {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable code, printed as the prefix of CLI errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::UnsupportedChannel { .. } => "E_CHANNEL",
            Error::TooShort { .. } => "E_TOO_SHORT",
            Error::FpsMismatch { .. } => "E_FPS",
            Error::EmptyDataset(_) => "E_EMPTY",
            Error::ShapeMismatch(_) => "E_SHAPE",
            Error::BadLength(_) => "E_LENGTH",
            Error::InvalidSkeleton(_) => "E_SKELETON",
            Error::UnknownJoint { .. } => "E_UNKNOWN_JOINT",
            Error::EmptyPart(_) => "E_EMPTY_PART",
            Error::OddDim(_) => "E_ODD_DIM",
            Error::PartitionMismatch(_) => "E_PARTITION",
            Error::DegenerateStats { .. } => "E_DEGENERATE",
            Error::NonFiniteLoss { .. } => "E_NAN",
            Error::PairMismatch(_) => "E_PAIRS",
            Error::Config(_) => "E_CONFIG",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Io { .. } => "E_IO",
            Error::InFile { source, .. } => source.code(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps the error with the file (or other context) it came from.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::InFile { context: context.into(), source: Box::new(self) }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}

pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
    Error::io(path, source)
}
