//! Composite keys and the two measures every other module is built on:
//! the longest common prefix and the discriminative byte of a key set.
//!
//! Paths and values are raw byte strings compared byte-wise. A path ends
//! with a single `0x00` terminator, which makes the set of paths
//! prefix-free; values have one fixed length per index and are therefore
//! prefix-free as well.

use std::fmt;

use crate::error::{Error, Result};

/// Path terminator byte.
pub const TERMINATOR: u8 = 0x00;
/// Size of the opaque reference carried by every key.
pub const REF_LEN: usize = 20;
/// Default value length: a big-endian `u64`.
pub const DEFAULT_VALUE_LEN: usize = 8;
/// Longest path (terminator included) or value a key may carry. Leaf
/// suffix records store their lengths in one byte each.
pub const MAX_COMPONENT_LEN: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Path,
    Value,
    /// Terminal marker: the key set is not partitioned any further.
    Bottom,
}

impl Dimension {
    pub fn alternate(self) -> Result<Dimension> {
        match self {
            Dimension::Path => Ok(Dimension::Value),
            Dimension::Value => Ok(Dimension::Path),
            Dimension::Bottom => Err(Error::NoAlternate(self)),
        }
    }

    /// Alternate of a splitting dimension. Panics on `Bottom`, which callers
    /// never hold at the points where this is used.
    pub fn flip(self) -> Dimension {
        self.alternate().expect("flip on a terminal dimension")
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Path => "P",
            Dimension::Value => "V",
            Dimension::Bottom => "⊥",
        })
    }
}

/// 20-byte opaque reference to the indexed data item (a SHA1 in practice).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RefId(pub [u8; REF_LEN]);

impl RefId {
    pub fn from_hex(s: &str) -> Result<RefId> {
        if s.len() != 2 * REF_LEN {
            return Err(Error::InvalidKey(format!(
                "reference must be {} hex digits, got {}",
                2 * REF_LEN,
                s.len()
            )));
        }
        let mut out = [0u8; REF_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::InvalidKey(format!("bad reference hex: {e}")))?;
        Ok(RefId(out))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; REF_LEN] {
        &self.0
    }
}

impl fmt::Debug for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RefId({})", &self.to_hex()[..10])
    }
}

impl fmt::Display for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A `(path, value, ref)` triple, the unit of indexing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompositeKey {
    pub path: Vec<u8>,
    pub value: Vec<u8>,
    pub reference: RefId,
}

impl CompositeKey {
    /// Builds a key from an already terminated path and an encoded value.
    pub fn new(path: Vec<u8>, value: Vec<u8>, reference: RefId) -> Result<CompositeKey> {
        validate_path(&path)?;
        if value.is_empty() || value.len() > MAX_COMPONENT_LEN {
            return Err(Error::InvalidKey(format!(
                "value length {} outside 1..={MAX_COMPONENT_LEN}",
                value.len()
            )));
        }
        Ok(CompositeKey { path, value, reference })
    }

    /// Builds a key from an unterminated path and a `u64` value encoded
    /// with the default 8-byte big-endian layout.
    pub fn from_parts(raw_path: &[u8], value: u64, reference: RefId) -> Result<CompositeKey> {
        CompositeKey::new(terminate_path(raw_path)?, encode_value(value).to_vec(), reference)
    }

    pub fn get(&self, dim: Dimension) -> &[u8] {
        match dim {
            Dimension::Path => &self.path,
            Dimension::Value => &self.value,
            Dimension::Bottom => &[],
        }
    }

    /// The path without its terminator, lossily decoded for display.
    pub fn display_path(&self) -> String {
        String::from_utf8_lossy(&self.path[..self.path.len() - 1]).into_owned()
    }
}

fn validate_path(path: &[u8]) -> Result<()> {
    match path.iter().position(|&b| b == TERMINATOR) {
        Some(pos) if pos + 1 == path.len() => {}
        Some(pos) => {
            return Err(Error::InvalidKey(format!(
                "path has an embedded terminator at byte {}",
                pos + 1
            )))
        }
        None => return Err(Error::InvalidKey("path lacks its 0x00 terminator".into())),
    }
    if path.len() > MAX_COMPONENT_LEN {
        return Err(Error::InvalidKey(format!(
            "path is {} bytes, the limit is {MAX_COMPONENT_LEN}",
            path.len()
        )));
    }
    Ok(())
}

/// Appends the terminator to a raw path.
pub fn terminate_path(raw: &[u8]) -> Result<Vec<u8>> {
    if let Some(pos) = raw.iter().position(|&b| b == TERMINATOR) {
        return Err(Error::InvalidKey(format!(
            "path contains a 0x00 byte at position {}",
            pos + 1
        )));
    }
    let mut out = Vec::with_capacity(raw.len() + 1);
    out.extend_from_slice(raw);
    out.push(TERMINATOR);
    Ok(out)
}

/// Big-endian encoding, which keeps byte-wise order equal to numeric order.
pub fn encode_value(raw: u64) -> [u8; 8] {
    raw.to_be_bytes()
}

/// Big-endian encoding into `len` bytes. Fails if `raw` does not fit.
pub fn encode_value_len(raw: u64, len: usize) -> Result<Vec<u8>> {
    if len == 0 || len > MAX_COMPONENT_LEN {
        return Err(Error::InvalidKey(format!("value length {len} not supported")));
    }
    let be = raw.to_be_bytes();
    if len >= 8 {
        let mut out = vec![0u8; len - 8];
        out.extend_from_slice(&be);
        Ok(out)
    } else {
        let (high, low) = be.split_at(8 - len);
        if high.iter().any(|&b| b != 0) {
            return Err(Error::InvalidKey(format!("value {raw} does not fit into {len} bytes")));
        }
        Ok(low.to_vec())
    }
}

/// Parses a value token: a decimal unsigned integer or `0x` followed by
/// exactly `2 * len` hex digits.
pub fn parse_value(token: &str, len: usize) -> Result<Vec<u8>> {
    if let Some(digits) = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")) {
        if digits.len() != 2 * len {
            return Err(Error::InvalidKey(format!(
                "hex value needs exactly {} digits, got {}",
                2 * len,
                digits.len()
            )));
        }
        hex::decode(digits).map_err(|e| Error::InvalidKey(format!("bad hex value: {e}")))
    } else {
        let raw: u64 = token
            .parse()
            .map_err(|e| Error::InvalidKey(format!("bad value {token:?}: {e}")))?;
        encode_value_len(raw, len)
    }
}

/// Parses one ingestion record: `path<TAB>value<TAB>ref-hex`.
pub fn parse_record(line: &str, value_len: usize) -> Result<CompositeKey> {
    let mut fields = line.split('\t');
    let (Some(path), Some(value), Some(reference), None) = (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::InvalidKey("expected three tab-separated fields".into()));
    };
    let key = CompositeKey::new(
        terminate_path(path.as_bytes())?,
        parse_value(value.trim(), value_len)?,
        RefId::from_hex(reference.trim())?,
    )?;
    Ok(key)
}

/// Reads every record of a TSV source, reporting the first malformed line.
pub fn read_records<R: std::io::BufRead>(reader: R, value_len: usize) -> Result<Vec<CompositeKey>> {
    let mut keys = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Record {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let key = parse_record(line, value_len).map_err(|e| Error::Record {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        keys.push(key);
    }
    Ok(keys)
}

/// Renders a key as an ingestion record.
pub fn format_record(key: &CompositeKey) -> String {
    format!(
        "{}\t0x{}\t{}",
        key.display_path(),
        hex::encode(&key.value),
        key.reference
    )
}

/// Number of leading bytes shared by `a` and `b`.
pub fn common_prefix_len(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Length of the longest common prefix of `keys` in `dim`.
pub fn lcp_len<'a, I>(keys: I, dim: Dimension) -> Result<usize>
where
    I: IntoIterator<Item = &'a CompositeKey>,
{
    let mut iter = keys.into_iter();
    let first = iter.next().ok_or(Error::EmptyKeySet)?.get(dim);
    let mut len = first.len();
    for k in iter {
        len = common_prefix_len(&first[..len], k.get(dim));
        if len == 0 {
            break;
        }
    }
    Ok(len)
}

/// Longest byte prefix shared by all keys in `dim`.
pub fn lcp<'a, I>(keys: I, dim: Dimension) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = &'a CompositeKey> + Clone,
{
    let len = lcp_len(keys.clone(), dim)?;
    let first = keys.into_iter().next().ok_or(Error::EmptyKeySet)?;
    Ok(first.get(dim)[..len].to_vec())
}

/// 1-based position of the first byte at which the keys differ in `dim`.
pub fn dsc<'a, I>(keys: I, dim: Dimension) -> Result<usize>
where
    I: IntoIterator<Item = &'a CompositeKey>,
{
    Ok(lcp_len(keys, dim)? + 1)
}
