use std::path::{Path, PathBuf};

use crate::tensor_file::TensorFileError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad tensor file {}", path.display())]
    Tensor {
        path: PathBuf,
        #[source]
        source: TensorFileError,
    },
    #[error(transparent)]
    Core(#[from] hfpm_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 0 success, 2 config, 3 placement, 4 divergence, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        use hfpm_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Tensor { .. } => 5,
            CliError::Core(E::PlacementFailed(_)) => 3,
            CliError::Core(E::TrainingDiverged { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
