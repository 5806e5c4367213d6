use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("letter {letter} is outside the alphabet 1..={arity}")]
    LetterOutOfRange { letter: u16, arity: usize },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        last_iterate: Vec<f64>,
    },

    #[error("operator tuple is not certified nonexpansive")]
    NotCertified,

    #[error("layer {layer} violates the precondition C <= 1 (C = {value})")]
    ExpansionPrecondition { layer: usize, value: f64 },

    #[error("grid refinement to {required} cells exceeds the cap of {cap}")]
    GridCap { required: usize, cap: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("perturbation bound violated for sample {sample}: empirical {empirical} > bound {bound}")]
    BoundViolation { sample: usize, empirical: f64, bound: f64 },

    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::GridCap { .. } => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Format { .. } | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 3,
            _ => 4,
        }
    }
}
