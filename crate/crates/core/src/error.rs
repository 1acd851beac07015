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
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {record}: sentence {sentence} is empty")]
    EmptySentence { record: String, sentence: usize },
    #[error("duplicate story_id {0:?}")]
    DuplicateStoryId(String),
    #[error("line {line}: story {story_id:?} has two candidate endings; the ordering task needs a single gold sequence")]
    TwoChoiceStory { line: usize, story_id: String },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("record {record}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("record {record}: {sentences} sentences but {embeddings} embeddings")]
    CountMismatch {
        record: usize,
        sentences: usize,
        embeddings: usize,
    },
    #[error("record {record}: embedding {index} has a non-finite component")]
    NonFinite { record: usize, index: usize },
    #[error("zero-norm vector ({0})")]
    ZeroNorm(String),
    #[error("sentence {0:?} has no tokens")]
    NoTokens(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("brute-force search is capped at n = {cap} (got n = {n}); use nearest-neighbor search")]
    SearchCap { n: usize, cap: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown story_id {0:?}")]
    UnknownStory(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by malformed or inconsistent input, as opposed
    /// to runtime failures (I/O, divergence).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Diverged { .. })
    }
}
