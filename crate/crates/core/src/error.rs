use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid key: {0}")]
    InvalidKey(String),

    #[error("operation requires a non-empty key set")]
    EmptyKeySet,

    #[error("key is not a member of the key set")]
    NotMember,

    #[error("dimension {0} has no alternate")]
    NoAlternate(crate::keys::Dimension),

    #[error("field overflow while serializing node: {0}")]
    Overflow(String),

    #[error("corrupt trie file at offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("{context} ({path}): {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("in-memory trie is full ({0} keys)")]
    TrieFull(usize),

    #[error("index busy: a merge is still running and the spare in-memory trie is full")]
    Busy,

    #[error("index was opened read-only")]
    ReadOnly,

    #[error("query syntax error at position {pos}: {reason}")]
    QuerySyntax { pos: usize, reason: String },

    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(context: &'static str, path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            context,
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
