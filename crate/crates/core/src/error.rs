use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the audit pipeline.
///
/// The variants map onto the CLI's exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed:\n  {}", .issues.join("\n  "))]
    Validation { issues: Vec<String> },

    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("generation failed for group '{group}' at index {index}: {message}")]
    Generation {
        group: String,
        index: usize,
        message: String,
    },

    #[error("generation aborted; completed groups [{}], failed groups [{}]: {cause}",
        .completed.join(", "), .failed.join(", "))]
    GenerationAborted {
        completed: Vec<String>,
        failed: Vec<String>,
        cause: Box<Error>,
    },

    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 = configuration or input validation, 3 = generation, 4 = analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation { .. } | Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Generation { .. } | Error::GenerationAborted { .. } => 3,
            Error::Analysis(_) => 4,
        }
    }
}
