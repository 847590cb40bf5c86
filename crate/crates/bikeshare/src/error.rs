use std::path::{Path, PathBuf};

use crate::formats::MalformedRows;

/// Exit code for configuration and argument errors.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code for a failure while a stage was running.
pub const EXIT_STAGE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    /// A file that parses but does not have the expected shape.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Malformed(#[from] MalformedRows),
    /// Bad arguments, configuration or missing inputs, detected before any work.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Analysis(Box<dyn std::error::Error + Send + Sync>),
    #[error("stage {stage} failed for {city}: {source}")]
    Stage {
        stage: String,
        city: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn csv(path: impl AsRef<Path>, source: csv::Error) -> Self {
        Error::Csv { path: path.as_ref().to_path_buf(), source }
    }

    pub fn json(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Error::Json { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Invalid(_) => EXIT_VALIDATION,
            _ => EXIT_STAGE,
        }
    }
}

macro_rules! analysis_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Analysis(Box::new(e))
            }
        })*
    };
}

analysis_errors!(
    bikeshare_core::calendar::CalendarError,
    bikeshare_core::divergence::DivergenceError,
    bikeshare_core::ingest::SnapshotError,
    bikeshare_core::jsdnet::NetworkError,
    bikeshare_core::rankdist::RankError,
    bikeshare_core::rankdist::FitError,
    bikeshare_core::rankmodel::ModelError,
    bikeshare_core::timeseries::DistributionError,
);
