use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("tagset line {line}: {msg}")]
    TagsetParse { line: usize, msg: String },

    #[error("duplicate {space} type name `{name}`")]
    DuplicateType { space: &'static str, name: String },

    #[error("{0} type list is empty")]
    EmptyTypeList(&'static str),

    #[error("invalid type name `{0}`")]
    InvalidTypeName(String),

    #[error("malformed tag `{0}`: expected `O`, `B-<type>` or `I-<type>`")]
    MalformedTag(String),

    #[error("unknown {space} type in tag `{tag}`")]
    UnknownTag { space: &'static str, tag: String },

    #[error("{space} label index {index} out of range (label space {size})")]
    LabelOutOfRange {
        space: &'static str,
        index: usize,
        size: usize,
    },

    #[error("line {line}: header field `{field}`: {msg}")]
    Header {
        line: usize,
        field: &'static str,
        msg: String,
    },

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: record `{id}`: {msg}")]
    Record {
        line: usize,
        id: String,
        msg: String,
    },

    #[error("record `{id}` token {token}: p_main row sums to {sum} (expected 1 within 1e-4)")]
    NotNormalized { id: String, token: usize, sum: f64 },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: missing required field `{field}`")]
    MissingField { id: String, field: &'static str },

    #[error("zero-norm vector ({0})")]
    ZeroVector(String),

    #[error("datastore is empty")]
    EmptyDatastore,

    #[error("neighbor list is empty")]
    EmptyNeighbors,

    #[error("datastore: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("datastore: unsupported version {0}")]
    VersionMismatch(u32),

    #[error("datastore: truncated file ({0})")]
    Truncated(String),

    #[error("tagset hash mismatch: file built under {found}, current tagset is {expected}")]
    TagsetHashMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sentence id mismatch between gold and predictions: {0}")]
    IdMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from malformed input or an out-of-domain
    /// setting, as opposed to an environment failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
