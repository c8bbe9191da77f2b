use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate case id `{0}`")]
    DuplicateId(String),

    #[error("case `{id}`: outcome {outcome} disagrees with vote majority")]
    MajorityMismatch { id: String, outcome: u8 },

    #[error("case `{0}`: tied votes, majority outcome cannot be validated")]
    TiedVotes(String),

    #[error("case `{id}`: invalid votes ({reason})")]
    InvalidVotes { id: String, reason: String },

    #[error("case `{0}`: votes required by expert imputation are missing")]
    MissingVotes(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pool contains a single outcome class; cannot balance")]
    SingleClass,

    #[error("pool contains a single authority; cannot fit propensity model")]
    SingleAuthority,

    #[error("no determinate cases available to train on")]
    EmptyDeterminate,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot aggregate reports: {0}")]
    MixedReports(String),

    #[error("unknown case id `{id}` ({available} cases available)")]
    UnknownCase { id: String, available: usize },

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration rather than by data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| match e {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
