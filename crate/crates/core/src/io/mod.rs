//! File formats: dense maps, trajectories, point clouds, key=value configs.

mod dtm;
mod kv;
mod ply;
mod trajectory;

pub use dtm::{decode_dtm, encode_dtm, read_dtm, write_dtm, DTM_MAGIC};
pub use kv::{format_kv, parse_kv, KvMap};
pub use ply::{read_ply, write_ply};
pub use trajectory::{format_trajectory, parse_trajectory, read_trajectory, write_trajectory};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

/// Writes a file, creating parent directories as needed.
pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
