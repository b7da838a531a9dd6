use std::path::PathBuf;

use crate::types::{ContainerLabel, PersonId};

/// Errors raised by the engine, the simulator and the file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("target fps must be positive, got {0}")]
    InvalidFps(f64),

    #[error("inconsistent latency profiles: {0}")]
    InconsistentProfiles(String),

    #[error("detection {det_index} in frame {frame} has no crop reference or embedding")]
    MissingPayload { frame: u64, det_index: u32 },

    #[error("container {0} is not in probation")]
    InvalidState(ContainerLabel),

    #[error("unknown person id {0}")]
    UnknownId(PersonId),

    #[error("identity table is full (capacity {0})")]
    TableFull(usize),

    #[error("frame {got} arrived after frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("identification rate is undefined with zero identification attempts")]
    EmptyDenominator,

    #[error("frame count mismatch: {predicted} predicted frames vs {ground_truth} ground-truth frames")]
    FrameMismatch { predicted: usize, ground_truth: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
