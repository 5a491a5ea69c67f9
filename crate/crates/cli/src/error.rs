use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Malformed { path: String, message: String },
    #[error(transparent)]
    Core(#[from] rbto_core::Error),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Malformed { .. } => "malformed_file",
            Self::Core(_) => "solver",
        }
    }

    /// The machine-readable record printed on failure.
    pub fn record(&self) -> ErrorRecord {
        ErrorRecord { status: "error", kind: self.kind(), message: self.to_string() }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
