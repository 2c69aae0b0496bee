use std::path::{Path, PathBuf};

use pfsmc::lmm::LmmError;
use pfsmc::sampler::SamplerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl BenchError {
    /// Process exit status: 2 for configuration, 3 for numerical and 4 for
    /// I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numerical(_) => 3,
            BenchError::Io { .. } | BenchError::Format { .. } => 4,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
        move |source| BenchError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn format(path: &Path, message: impl std::fmt::Display) -> BenchError {
        BenchError::Format { path: path.to_path_buf(), message: message.to_string() }
    }
}

impl From<SamplerError> for BenchError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(m) => BenchError::Config(m),
            SamplerError::Propagation(inner) => inner.into(),
            other => BenchError::Numerical(other.to_string()),
        }
    }
}

impl From<LmmError> for BenchError {
    fn from(e: LmmError) -> Self {
        match e {
            LmmError::Config(_) | LmmError::UnsupportedOrder(_) => BenchError::Config(e.to_string()),
            other => BenchError::Numerical(other.to_string()),
        }
    }
}
