use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("empty gold set")]
    EmptyGoldSet,

    #[error("not found: {0}")]
    NotFound(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unannotated source post {0}")]
    UnannotatedSource(String),

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no valid embedding lines in {0}")]
    NoValidEmbeddings(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

impl Error {
    /// Errors caused by the caller's input rather than by this program.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json { .. } => "invalid_json",
            Error::Validation(_) => "validation",
            Error::DegenerateTrainingSet(_) => "degenerate_training_set",
            Error::EmptyCorpus(_) => "empty_corpus",
            Error::EmptyGoldSet => "empty_gold_set",
            Error::NotFound(_) => "not_found",
            Error::Contract(_) => "contract",
            Error::UnannotatedSource(_) => "unannotated_source",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NoValidEmbeddings(_) => "no_valid_embeddings",
            Error::Config(_) => "config",
            Error::Internal(_) => "internal",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
