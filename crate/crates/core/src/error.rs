use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::LanguageId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("corpus files are not aligned: {l1_lines} lines vs {l2_lines} lines")]
    Alignment { l1_lines: usize, l2_lines: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("negative table of size {table_size} cannot hold {n_words} words of {lang}")]
    TableTooSmall {
        lang: LanguageId,
        table_size: usize,
        n_words: usize,
    },

    #[error("no entries for language {0} in the vocabulary")]
    NoWords(LanguageId),

    #[error("negative table contains only the excluded word {0}")]
    CannotExclude(usize),

    #[error("empty n-gram context")]
    EmptyContext,

    #[error("non-finite score {0} in logistic update")]
    NumericOverflow(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("neighbourhood size {k} exceeds set size {n}")]
    NeighbourhoodTooLarge { k: usize, n: usize },

    #[error("empty candidate set")]
    EmptyTargets,

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("need at least 2 usable rows, found {0}")]
    TooFewRows(usize),

    #[error("evaluation sets are misaligned: {0} vs {1}")]
    Misaligned(usize, usize),

    #[error("dictionary has no entries covered by the vocabulary")]
    EmptyOverlap,

    #[error("no in-vocabulary tokens")]
    AllOov,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
