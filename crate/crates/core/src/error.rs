use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("EmptyDocument: shingle set is empty")]
    EmptyDocument,

    #[error("EmptyCorpus: cannot index an empty corpus")]
    EmptyCorpus,

    #[error("UnencodableText: text {0:?} produced no features")]
    UnencodableText(String),

    #[error("EmptyFCG: target {0} has no members")]
    EmptyFcg(String),

    #[error("unknown document {0}")]
    UnknownDocument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("NegativeSamplingExhausted: no admissible tail for ({head}, {relation}) after {attempts} attempts")]
    NegativeSamplingExhausted {
        head: String,
        relation: String,
        attempts: usize,
    },

    #[error("DivergedGradient: non-finite gradient at step {step}")]
    DivergedGradient { step: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data errors, 3 for training divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DivergedGradient { .. } => 3,
            Error::Config(_) => 1,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, actual })
    }
}
