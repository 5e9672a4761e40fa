use thiserror::Error;

use crate::binio::FormatError;
use crate::cross_species::AnalysisError;
use crate::features::FeatureError;
use crate::neuro::DataError;
use crate::nn::NnError;
use crate::rdm::RdmError;
use crate::stats::StatsError;

/// Crate-level error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Rdm(#[from] RdmError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Whether the failure came from numerics (degenerate input, divergence)
    /// rather than from malformed data or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Stats(_) => true,
            Error::Rdm(e) => e.is_numeric(),
            Error::Nn(NnError::Diverged { .. }) => true,
            Error::Analysis(AnalysisError::Stats(_)) => true,
            _ => false,
        }
    }
}
