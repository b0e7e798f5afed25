use thiserror::Error;

/// Failure classes of the harness. Each maps onto a stable process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) | HarnessError::Io { .. } => 2,
            HarnessError::Protocol(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<privdist::Error> for HarnessError {
    fn from(e: privdist::Error) -> Self {
        use privdist::Error as E;
        match e {
            E::Parameter(_) => HarnessError::Config(e.to_string()),
            E::Protocol(_) | E::Transport(_) | E::Offline(_) => HarnessError::Protocol(e.to_string()),
            E::Shape(_) | E::Domain(_) | E::Range(_) | E::Degenerate(_) | E::Rank(_) => HarnessError::Data(e.to_string()),
        }
    }
}
