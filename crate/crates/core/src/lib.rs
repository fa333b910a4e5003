//! Content-and-structure index over composite `(path, value, ref)` keys.
//!
//! Keys are dynamically interleaved: a trie alternately branches on the
//! first path byte and the first value byte at which the keys below a
//! node differ. A mutable in-memory trie absorbs insertions and is merged
//! into immutable disk tries of doubling capacity when it fills up.

pub mod bulkload;
pub mod costmodel;
pub mod disk_trie;
pub mod error;
pub mod fixture;
pub mod interleave;
pub mod keys;
pub mod lsm;
pub mod mem_trie;
pub mod query;
pub mod stats;
pub mod trie;

pub use bulkload::{BulkLoadConfig, BulkLoadReport, IoCounters, PageLimit};
pub use disk_trie::DiskTrie;
pub use error::{Error, Result};
pub use keys::{CompositeKey, Dimension, RefId};

pub use lsm::{LsmConfig, LsmIndex};
pub use mem_trie::MemTrie;
pub use query::CasQuery;

pub use trie::{Suffix, TrieNode, TrieSource};
