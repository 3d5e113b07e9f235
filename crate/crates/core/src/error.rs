use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("node id out of range: {id} (graph has {n_nodes} nodes)")]
    NodeOutOfRange { id: i64, n_nodes: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no players: target set has an empty neighborhood")]
    NoPlayers,

    #[error("too many permissible permutations: more than {cap}")]
    CapExceeded { cap: usize },

    #[error("too many players for exhaustive enumeration: {n} > {max}")]
    TooManyPlayers { n: usize, max: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("node {0} has no label")]
    Unlabeled(usize),

    #[error("missing class prototypes for classes {0:?}")]
    MissingPrototypes(Vec<usize>),

    #[error("no labeled training nodes")]
    NoTrainingLabels,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("artifact {0} already exists (use --force or a new output directory)")]
    ArtifactExists(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ArtifactExists(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
