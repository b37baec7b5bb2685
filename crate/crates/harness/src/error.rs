use scenegrid_core::error::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for invalid configuration or input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Missing(_) => 1,
                _ => 2,
            },
            CliError::Io { .. } => 2,
        }
    }
}
