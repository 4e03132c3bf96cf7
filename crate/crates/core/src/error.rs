use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Input problems (`Io`, `Csv`, `Parse`, `InvalidParameter`) are separated from
/// analysis refusals (`EmptyPanel`, `NoEvents`, `FitRefused`, `NoConvergence`)
/// so callers can map them to different exit paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty panel")]
    EmptyPanel,

    #[error("no events")]
    NoEvents,

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("no convergence after {evaluations} evaluations (best beta {best_beta:.6}, objective {best_objective:.3e})")]
    NoConvergence {
        evaluations: usize,
        best_beta: f64,
        best_objective: f64,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that mean "the data did not support the analysis"
    /// rather than "the input was malformed".
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::EmptyPanel | Error::NoEvents | Error::FitRefused(_) | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
