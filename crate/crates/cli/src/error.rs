use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    UnstableDenominator(String),

    #[error("imaginary residual exceeds 3 standard errors: {0}")]
    ImagResidual(String),

    #[error("self-test failed: {0} check(s)")]
    SelftestFailed(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(ppbell_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::UnstableDenominator(_) => 3,
            CliError::ImagResidual(_) => 4,
            CliError::SelftestFailed(_) | CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<ppbell_core::Error> for CliError {
    fn from(e: ppbell_core::Error) -> Self {
        match e {
            ppbell_core::Error::Config(m) => CliError::Config(m),
            e @ ppbell_core::Error::UnstableDenominator { .. } => {
                CliError::UnstableDenominator(e.to_string())
            }
            e => CliError::Core(e),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
