use std::path::PathBuf;

use gbpm::drivers::RunError;
use gbpm::GbpmError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] GbpmError),

    #[error("run failed after {rounds} rounds: {cause}")]
    Run { rounds: u64, cause: GbpmError },

    #[error("{failed} of {total} checks failed")]
    Verification { failed: usize, total: usize },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl HarnessError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Machine-readable category printed by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Model(e) | HarnessError::Run { cause: e, .. } => e.category(),
            HarnessError::Verification { .. } => "verification",
            HarnessError::Serialize(_) => "serialize",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" | "spec" => 2,
            "io" | "serialize" => 3,
            "numerical" => 4,
            "verification" => 5,
            _ => 1,
        }
    }
}

impl From<RunError> for HarnessError {
    fn from(e: RunError) -> Self {
        let rounds = e.partial.as_ref().map(|r| r.rounds_played()).unwrap_or(0);
        HarnessError::Run { rounds, cause: e.cause }
    }
}
