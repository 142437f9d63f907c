use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration produced a non-finite state ({conc}, {temp})")]
    NonFinite { conc: f64, temp: f64 },

    #[error("state ({conc}, {temp}) is outside the invariant set")]
    OutsideSet { conc: f64, temp: f64 },

    #[error("no sampled action keeps cell ({i}, {j}) inside the set")]
    MissingSafeAction { i: usize, j: usize },

    #[error("rejection sampling found no admissible initial state after {0} attempts")]
    EmptySafeSet(usize),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite loss during PPO update: {0}")]
    NonFiniteLoss(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("unsupported file version: expected `{expected}`, found `{found}`")]
    VersionMismatch { expected: String, found: String },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("architecture mismatch: expected {expected:?}, found {found:?}")]
    ArchitectureMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("{path}: {source}")]
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
}
