use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a construction-time invariant (rotation, intrinsics, rig topology, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("degenerate: pure rotation, fundamental matrix undefined")]
    PureRotation,

    #[error("empty attention row {row}")]
    EmptyAttentionRow { row: usize },

    /// A NaN or infinity was encountered during a numerical computation.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("pyramid level {level:?} larger than source {source_dims:?}")]
    LevelLargerThanSource {
        level: (usize, usize),
        source_dims: (usize, usize),
    },

    #[error("missing pose for view {0}")]
    MissingPose(String),

    #[error("view {0} has no neighbors")]
    NoNeighbors(String),

    /// Line-numbered text-format diagnostic.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// True for failures caused by degenerate geometry or numerics rather than
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PureRotation | Error::NonFinite(_) | Error::EmptyAttentionRow { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
