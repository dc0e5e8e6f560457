//! Host side of the wakelink simulator: configuration files, dataset and
//! parameter containers, run manifests, a thread-pool executor and the
//! experiment drivers behind the `wakelink` binary.

pub mod config;
pub mod dataset;
pub mod exec;
pub mod experiment;
pub mod manifest;
pub mod output;
pub mod params;

use std::path::{Path, PathBuf};

use wakelink_core::calibrate::CalibrateError;
use wakelink_core::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for file
    /// problems, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Calibrate(_) | Error::Train(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
