use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: u64, reason: String },

    #[error("dataset exhausted by filters")]
    DatasetExhausted,

    #[error("duplicate interaction ({user}, {item})")]
    DuplicateInteraction { user: String, item: String },

    #[error("user has no genre mass")]
    NoGenreMass,

    #[error("unsmoothed zero support for genre index {genre}")]
    ZeroSupport { genre: usize },

    #[error("distribution sizes differ ({left} vs {right})")]
    UniverseMismatch { left: usize, right: usize },

    #[error("unknown user {0}")]
    UnknownUser(String),

    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("nothing to train for the external recommender")]
    ExternalNotTrainable,

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("instance too large for exhaustive search ({candidates} candidates, n = {n})")]
    InstanceTooLarge { candidates: usize, n: usize },

    #[error("list shorter than evaluation depth ({len} < {n})")]
    ListTooShort { len: usize, n: usize },

    #[error("undefined coefficient (zero precision)")]
    ZeroPrecision,

    #[error("nothing to aggregate")]
    EmptyAggregate,

    #[error("no systems to decide between")]
    NoSystems,

    #[error("missing prerequisite file {0}")]
    MissingInput(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: u64, reason: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
