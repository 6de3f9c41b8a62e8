use std::path::PathBuf;

use crate::akf::UpdateDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pose ({x}, {y}) is outside the workspace")]
    WorkspaceViolation { x: f64, y: f64 },

    #[error("invalid command: {0}")]
    InvalidCommand(String),

    #[error("finite-difference stencil of half-width {h} leaves the workspace")]
    Stencil { h: f64 },

    #[error("requested {requested} components but the centered data only has rank {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("inconsistent dimensions: {0}")]
    DimensionInconsistency(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("filter update failed at step {step}: innovation matrix is singular (alpha = {alpha:.3e}, delta_eps = {delta_eps:.3e})", step = .diagnostics.step, alpha = .diagnostics.alpha, delta_eps = .diagnostics.delta_eps)]
    NumericalFailure { diagnostics: Box<UpdateDiagnostics> },

    #[error("controller gain matrix is singular")]
    SingularGain,

    #[error("servo loop failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
