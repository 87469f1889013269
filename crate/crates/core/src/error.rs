use std::path::PathBuf;

use crate::geometry::PolarPosition;

/// Errors produced by the localization library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("element index ({strip}, {element}) out of range for a {n_strips}x{per_strip} layout")]
    Index {
        strip: usize,
        element: usize,
        n_strips: usize,
        per_strip: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("effective steering vector vanishes at {0}")]
    DegenerateCandidate(PolarPosition),

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: malformed record: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dimension { .. } | Error::Index { .. } | Error::Parse { .. }
        )
    }
}
