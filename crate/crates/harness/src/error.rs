use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{phase} failed: {source}")]
    Numerical {
        phase: &'static str,
        #[source]
        source: gridtrack::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed file: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Numerical { .. } => 3,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 1,
        }
    }
}

/// Attaches the pipeline phase to a core error.
pub(crate) trait InPhase<T> {
    fn in_phase(self, phase: &'static str) -> Result<T>;
}

impl<T> InPhase<T> for gridtrack::Result<T> {
    fn in_phase(self, phase: &'static str) -> Result<T> {
        self.map_err(|source| HarnessError::Numerical { phase, source })
    }
}
