//! Crate-wide error type and the process exit codes the CLI maps it to.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/array shape mismatch between inputs and parameters.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A data file failed to parse; carries file and 1-based line.
    #[error("parse error in {}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    /// An upstream artifact (dataset, checkpoint, embeddings) is absent.
    #[error("missing artifact {}: run `cyclerep {hint}` first", path.display())]
    MissingArtifact { path: PathBuf, hint: String },

    /// Non-finite values or other numeric breakdown.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Evaluation protocol cannot be satisfied (e.g. too few videos).
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 0 success, 1 config error, 2 missing artifact,
    /// 3 numeric failure. Everything else is treated as a config/usage
    /// problem.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact { .. } => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
