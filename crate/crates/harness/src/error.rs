use std::path::PathBuf;

/// Harness failures, grouped into machine-readable categories.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("no results found under {0}")]
    NoResults(PathBuf),

    #[error(transparent)]
    Core(#[from] fishnets_core::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        HarnessError::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Stable category string printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Format { .. } => "format",
            HarnessError::NoResults(_) => "no_results",
            HarnessError::Core(fishnets_core::Error::Config(_)) => "config",
            HarnessError::Core(_) => "numerical",
        }
    }

    /// Process exit code; configuration problems share the usage code 2.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "no_results" => 3,
            "io" | "format" => 4,
            _ => 5,
        }
    }
}
