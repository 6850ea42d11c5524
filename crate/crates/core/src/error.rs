use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid lane index {lane} (road has lanes 1..={num_lanes})")]
    InvalidLane { lane: usize, num_lanes: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("too many malformed rows in {path}: {malformed} of {total} (first at line {first_line}: {first_msg})")]
    Malformed {
        path: String,
        malformed: usize,
        total: usize,
        first_line: usize,
        first_msg: String,
    },

    #[error("track {vehicle_id} has no room for a window at index {anchor}")]
    InsufficientFrames { vehicle_id: u32, anchor: usize },

    #[error("unsupported checkpoint version: {0:?}")]
    Version(String),

    #[error("no samples")]
    NoSamples,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
