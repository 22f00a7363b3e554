use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular surrogate system; use gamma > 0 or remove duplicate points")]
    SingularSystem,

    #[error("only {achievable} distinct points available, {requested} requested")]
    InsufficientDistinct { requested: usize, achievable: usize },

    #[error("instance {instance}: {source}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("objective returned a non-finite value {value} at {point:?}")]
    NonFiniteObjective { point: Vec<f64>, value: f64 },

    #[error("training diverged (non-finite loss at epoch {epoch}); try a smaller learning rate")]
    Divergence { epoch: usize },

    #[error(
        "insufficient validation samples for requested (alpha={alpha}, delta={delta}): \
         m={m} gives epsilon_m={epsilon_m:.6} > alpha; need m >= {min_m}"
    )]
    InsufficientSamples {
        alpha: f64,
        delta: f64,
        m: usize,
        epsilon_m: f64,
        min_m: usize,
    },

    #[error("unsupported file format {found:?} (expected {expected:?})")]
    FormatVersion { expected: String, found: String },

    #[error("unknown problem {0:?}")]
    UnknownProblem(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_instance(self, instance: usize) -> Self {
        Error::Instance {
            instance,
            source: Box::new(self),
        }
    }
}
