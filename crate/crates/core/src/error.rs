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

    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },

    #[error("{what}:{line}: {msg}")]
    Format {
        what: String,
        line: usize,
        msg: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sentence is already tagged with {0:?}")]
    AlreadyTagged(String),

    #[error("dangling joiner at end of sentence (last unit {0:?})")]
    DanglingJoiner(String),

    #[error("requested {requested} sentences but the pool holds only {available}")]
    PoolTooSmall { requested: usize, available: usize },

    #[error("recipe component {0} has no data")]
    MissingComponent(String),

    #[error("unknown recipe component or preset {0:?}")]
    UnknownComponent(String),

    #[error("hypothesis count {hyps} does not match reference count {refs}")]
    LengthMismatch { hyps: usize, refs: usize },

    #[error("token {0:?} is not in the vocabulary; rebuild the vocabulary or re-apply the joint BPE model")]
    UnknownToken(String),

    #[error("non-finite loss at update {update}")]
    NonFiniteLoss { update: usize },

    #[error("vocabulary mismatch: checkpoint has {expected} (hash {expected_hash}), data needs {found} (hash {found_hash}); re-run with the vocabulary carried over from the baseline")]
    VocabMismatch {
        expected: usize,
        expected_hash: String,
        found: usize,
        found_hash: String,
    },

    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{kind} model was learned on data {model_hash} but is being applied to data {data_hash}; rebuild it or pass the override")]
    StaleModel {
        kind: &'static str,
        model_hash: String,
        data_hash: String,
    },

    #[error("incompatible language models: {0}")]
    IncompatibleLm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} (round {round}) failed")]
    Stage {
        stage: String,
        round: usize,
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

    pub(crate) fn format(what: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>, round: usize) -> Self {
        Error::Stage {
            stage: stage.into(),
            round,
            source: Box::new(self),
        }
    }
}
