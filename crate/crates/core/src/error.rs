use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
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

    #[error("duplicate sentence id `{0}`")]
    DuplicateId(String),

    #[error("dataset has a single label `{0}`; at least two classes are required")]
    DegenerateLabels(String),

    #[error("class {class} has {count} record(s); at least 2 are needed for a stratified split")]
    ClassTooSmall { class: usize, count: usize },

    #[error("record `{0}` has no label")]
    MissingLabel(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unknown sentence id `{0}`")]
    UnknownId(String),

    #[error("record `{id}`: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("k = {k} exceeds the {distinct} distinct point(s) available")]
    TooFewDistinctPoints { k: usize, distinct: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no run results under {0}")]
    NoResults(PathBuf),

    #[error("unknown strategy `{0}` (valid: alps, badge, entropy, random, emb-km, ft-emb-km)")]
    UnknownStrategy(String),

    #[error("strategy `{0}` needs a trained classifier and cannot run cold")]
    WarmStartStrategy(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage-type errors map to CLI exit code 1, everything else to 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownStrategy(_)
                | Error::WarmStartStrategy(_)
                | Error::InvalidArgument(_)
        )
    }
}
