//! Immutable on-disk trie: node encoding, sizes, and a reader.
//!
//! File layout: a 28-byte preamble followed by the nodes in pre-order
//! with no padding.
//!
//! ```text
//! preamble  magic "RSCASIDX" | version u16 | value_length u8 | reserved u8
//!           | key_count u64 | root_offset u64          (little-endian)
//! node      header u32 | [m_ext u32] | s_P | s_V | body
//! header    bits 0-1 dim (0 leaf, 1 P, 2 V) | bits 2-10 m | bits 11-20 l_P
//!           | bits 21-30 l_V | bit 31 reserved
//! inner     m * (byte u8, child_offset u48)
//! leaf      m * (l_P u8, l_V u8, s_P, s_V, ref [u8; 20])
//! ```
//!
//! `m` = 511 marks a leaf with 511 or more suffixes; the real count then
//! follows the header as a `u32`.

use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::keys::{Dimension, RefId, REF_LEN};
use crate::trie::{NodeView, Suffix, TrieNode, TrieSource};

pub const MAGIC: &[u8; 8] = b"RSCASIDX";
pub const VERSION: u16 = 1;
pub const PREAMBLE_LEN: u64 = 28;
pub const HEADER_LEN: u64 = 4;
pub const CHILD_ENTRY_LEN: u64 = 7;
pub const MAX_OFFSET: u64 = (1 << 48) - 1;
const M_ESCAPE: usize = 511;
const MAX_SLICE: usize = 1023;

fn dim_code(dim: Dimension) -> u32 {
    match dim {
        Dimension::Bottom => 0,
        Dimension::Path => 1,
        Dimension::Value => 2,
    }
}

fn count_len(m: usize) -> u64 {
    if m >= M_ESCAPE {
        4
    } else {
        0
    }
}

/// Serialized size of an inner node.
pub fn inner_size(path_len: usize, value_len: usize, children: usize) -> u64 {
    HEADER_LEN + count_len(children) + (path_len + value_len) as u64 + CHILD_ENTRY_LEN * children as u64
}

pub fn suffix_size(s: &Suffix) -> u64 {
    (2 + s.path.len() + s.value.len() + REF_LEN) as u64
}

/// Serialized size of a leaf node.
pub fn leaf_size<'a>(path_len: usize, value_len: usize, suffixes: impl IntoIterator<Item = &'a Suffix>) -> u64 {
    let mut m = 0;
    let mut body = 0;
    for s in suffixes {
        m += 1;
        body += suffix_size(s);
    }
    HEADER_LEN + count_len(m) + (path_len + value_len) as u64 + body
}

pub fn node_size(n: &TrieNode) -> u64 {
    if n.is_leaf() {
        leaf_size(n.path.len(), n.value.len(), &n.suffixes)
    } else {
        inner_size(n.path.len(), n.value.len(), n.children.len())
    }
}

fn header(dim: Dimension, m: usize, path_len: usize, value_len: usize, out: &mut Vec<u8>) -> Result<()> {
    if path_len > MAX_SLICE || value_len > MAX_SLICE {
        return Err(Error::Overflow(format!(
            "node slices of {path_len}/{value_len} bytes exceed {MAX_SLICE}"
        )));
    }
    if dim != Dimension::Bottom && m > 256 {
        return Err(Error::Overflow(format!("inner node with {m} children")));
    }
    if m > u32::MAX as usize {
        return Err(Error::Overflow(format!("leaf with {m} suffixes")));
    }
    let m_field = m.min(M_ESCAPE) as u32;
    let word = dim_code(dim) | (m_field << 2) | ((path_len as u32) << 11) | ((value_len as u32) << 21);
    out.extend_from_slice(&word.to_le_bytes());
    if m >= M_ESCAPE {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    Ok(())
}

/// Encodes an inner node whose children start at the given offsets.
pub fn encode_inner(dim: Dimension, path: &[u8], value: &[u8], children: &[(u8, u64)]) -> Result<Vec<u8>> {
    if dim == Dimension::Bottom {
        return Err(Error::Overflow("inner node needs a splitting dimension".into()));
    }
    let mut out = Vec::with_capacity(inner_size(path.len(), value.len(), children.len()) as usize);
    header(dim, children.len(), path.len(), value.len(), &mut out)?;
    out.extend_from_slice(path);
    out.extend_from_slice(value);
    for &(b, off) in children {
        if off > MAX_OFFSET {
            return Err(Error::Overflow(format!("child offset {off} needs more than 48 bits")));
        }
        out.push(b);
        out.extend_from_slice(&off.to_le_bytes()[..6]);
    }
    Ok(out)
}

pub fn encode_leaf<'a>(
    path: &[u8],
    value: &[u8],
    suffixes: impl ExactSizeIterator<Item = &'a Suffix>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header(Dimension::Bottom, suffixes.len(), path.len(), value.len(), &mut out)?;
    out.extend_from_slice(path);
    out.extend_from_slice(value);
    for s in suffixes {
        push_suffix(s, &mut out)?;
    }
    Ok(out)
}

pub(crate) fn push_suffix(s: &Suffix, out: &mut Vec<u8>) -> Result<()> {
    if s.path.len() > 255 || s.value.len() > 255 {
        return Err(Error::Overflow(format!(
            "suffix of {}/{} bytes does not fit one-byte lengths",
            s.path.len(),
            s.value.len()
        )));
    }
    out.push(s.path.len() as u8);
    out.push(s.value.len() as u8);
    out.extend_from_slice(&s.path);
    out.extend_from_slice(&s.value);
    out.extend_from_slice(&s.reference.0);
    Ok(())
}

pub fn encode_preamble(value_len: usize, key_count: u64, root: u64) -> Result<[u8; PREAMBLE_LEN as usize]> {
    if value_len == 0 || value_len > 255 {
        return Err(Error::Overflow(format!("value length {value_len}")));
    }
    let mut out = [0u8; PREAMBLE_LEN as usize];
    out[..8].copy_from_slice(MAGIC);
    out[8..10].copy_from_slice(&VERSION.to_le_bytes());
    out[10] = value_len as u8;
    out[12..20].copy_from_slice(&key_count.to_le_bytes());
    out[20..28].copy_from_slice(&root.to_le_bytes());
    Ok(out)
}

/// Serializes a whole tree in pre-order, preamble included.
pub fn serialize_tree(root: Option<&TrieNode>, value_len: usize) -> Result<Vec<u8>> {
    fn go(n: &TrieNode, out: &mut Vec<u8>) -> Result<u64> {
        let at = out.len();
        let size = node_size(n) as usize;
        out.resize(at + size, 0);
        let mut keys = n.suffixes.len() as u64;
        let image = if n.is_leaf() {
            encode_leaf(&n.path, &n.value, n.suffixes.iter())?
        } else {
            let mut offsets = Vec::with_capacity(n.children.len());
            for (b, c) in &n.children {
                offsets.push((*b, out.len() as u64));
                keys += go(c, out)?;
            }
            encode_inner(n.dim, &n.path, &n.value, &offsets)?
        };
        out[at..at + size].copy_from_slice(&image);
        Ok(keys)
    }
    let mut out = vec![0u8; PREAMBLE_LEN as usize];
    let keys = match root {
        Some(r) => go(r, &mut out)?,
        None => 0,
    };
    out[..PREAMBLE_LEN as usize].copy_from_slice(&encode_preamble(value_len, keys, PREAMBLE_LEN)?);
    Ok(out)
}

/// A decoded node together with its encoded size.
#[derive(Debug, Clone)]
pub struct DecodedNode {
    pub view: NodeView<u64>,
    pub size: u64,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|s| s[0])
    }
}

/// Decodes the node at the start of `buf`. Returns `Ok(None)` when `buf`
/// ends before the node does.
pub fn decode_node(buf: &[u8], offset: u64) -> Result<Option<DecodedNode>> {
    let mut c = Cursor { buf, pos: 0 };
    let Some(h) = c.take(4) else { return Ok(None) };
    let word = u32::from_le_bytes(h.try_into().expect("4 bytes"));
    let dim = match word & 3 {
        0 => Dimension::Bottom,
        1 => Dimension::Path,
        2 => Dimension::Value,
        _ => return Err(Error::format(offset, "invalid dimension code")),
    };
    if word >> 31 != 0 {
        return Err(Error::format(offset, "reserved header bit set"));
    }
    let mut m = ((word >> 2) & 0x1FF) as usize;
    let lp = ((word >> 11) & 0x3FF) as usize;
    let lv = ((word >> 21) & 0x3FF) as usize;
    if m == M_ESCAPE {
        let Some(ext) = c.take(4) else { return Ok(None) };
        m = u32::from_le_bytes(ext.try_into().expect("4 bytes")) as usize;
    }
    if dim != Dimension::Bottom && (m == 0 || m > 256) {
        return Err(Error::format(offset, format!("inner node with {m} children")));
    }
    let Some(path) = c.take(lp) else { return Ok(None) };
    let Some(value) = c.take(lv) else { return Ok(None) };
    let mut view = NodeView {
        dim,
        path: path.to_vec(),
        value: value.to_vec(),
        children: Vec::new(),
        suffixes: Vec::new(),
    };
    if dim == Dimension::Bottom {
        view.suffixes.reserve(m.min(4096));
        for _ in 0..m {
            let (Some(sp), Some(sv)) = (c.u8(), c.u8()) else {
                return Ok(None);
            };
            let Some(p) = c.take(sp as usize) else { return Ok(None) };
            let Some(v) = c.take(sv as usize) else { return Ok(None) };
            let Some(r) = c.take(REF_LEN) else { return Ok(None) };
            view.suffixes.push(Suffix {
                path: p.to_vec(),
                value: v.to_vec(),
                reference: RefId(r.try_into().expect("20 bytes")),
            });
        }
    } else {
        let Some(body) = c.take(m * CHILD_ENTRY_LEN as usize) else {
            return Ok(None);
        };
        let mut last: Option<(u8, u64)> = None;
        for e in body.chunks_exact(CHILD_ENTRY_LEN as usize) {
            let mut o = [0u8; 8];
            o[..6].copy_from_slice(&e[1..]);
            let child = u64::from_le_bytes(o);
            if let Some((b, off)) = last {
                if e[0] <= b || child <= off {
                    return Err(Error::format(offset, "child entries out of order"));
                }
            }
            if child <= offset {
                return Err(Error::format(offset, "child precedes its parent"));
            }
            last = Some((e[0], child));
            view.children.push((e[0], child));
        }
    }
    Ok(Some(DecodedNode {
        view,
        size: c.pos as u64,
    }))
}

enum Backing {
    File(File),
    Bytes(Vec<u8>),
}

/// Read-only handle to a trie file (or an in-memory image of one).
pub struct DiskTrie {
    backing: Backing,
    path: Option<PathBuf>,
    file_len: u64,
    key_count: u64,
    root: u64,
    value_len: usize,
}

impl std::fmt::Debug for DiskTrie {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiskTrie")
            .field("path", &self.path)
            .field("file_len", &self.file_len)
            .field("key_count", &self.key_count)
            .finish()
    }
}

impl DiskTrie {
    pub fn open(path: impl AsRef<Path>) -> Result<DiskTrie> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io("opening trie file", path, e))?;
        let file_len = file
            .metadata()
            .map_err(|e| Error::io("reading trie file metadata", path, e))?
            .len();
        let mut pre = [0u8; PREAMBLE_LEN as usize];
        if file_len < PREAMBLE_LEN {
            return Err(Error::format(0, "file shorter than its preamble"));
        }
        file.read_exact_at(&mut pre, 0)
            .map_err(|e| Error::io("reading trie preamble", path, e))?;
        let mut t = DiskTrie {
            backing: Backing::File(file),
            path: Some(path.to_path_buf()),
            file_len,
            key_count: 0,
            root: 0,
            value_len: 0,
        };
        t.parse_preamble(&pre)?;
        Ok(t)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<DiskTrie> {
        if bytes.len() < PREAMBLE_LEN as usize {
            return Err(Error::format(0, "image shorter than its preamble"));
        }
        let pre: [u8; PREAMBLE_LEN as usize] = bytes[..PREAMBLE_LEN as usize].try_into().expect("28 bytes");
        let mut t = DiskTrie {
            file_len: bytes.len() as u64,
            backing: Backing::Bytes(bytes),
            path: None,
            key_count: 0,
            root: 0,
            value_len: 0,
        };
        t.parse_preamble(&pre)?;
        Ok(t)
    }

    fn parse_preamble(&mut self, pre: &[u8; PREAMBLE_LEN as usize]) -> Result<()> {
        if &pre[..8] != MAGIC {
            return Err(Error::format(0, "bad magic"));
        }
        let version = u16::from_le_bytes([pre[8], pre[9]]);
        if version != VERSION {
            return Err(Error::format(8, format!("unsupported version {version}")));
        }
        self.value_len = pre[10] as usize;
        self.key_count = u64::from_le_bytes(pre[12..20].try_into().expect("8 bytes"));
        self.root = u64::from_le_bytes(pre[20..28].try_into().expect("8 bytes"));
        if self.key_count > 0 && (self.root < PREAMBLE_LEN || self.root >= self.file_len) {
            return Err(Error::format(20, format!("root offset {} outside the file", self.root)));
        }
        Ok(())
    }

    pub fn key_count(&self) -> u64 {
        self.key_count
    }

    pub fn value_len(&self) -> usize {
        self.value_len
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn root_offset(&self) -> u64 {
        self.root
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn read(&self, offset: u64, len: usize) -> Result<Vec<u8>> {
        let end = (offset + len as u64).min(self.file_len);
        let n = end.saturating_sub(offset) as usize;
        match &self.backing {
            Backing::Bytes(b) => Ok(b[offset as usize..offset as usize + n].to_vec()),
            Backing::File(f) => {
                let mut buf = vec![0u8; n];
                f.read_exact_at(&mut buf, offset)
                    .map_err(|e| Error::io("reading trie node", self.path.clone().unwrap_or_default(), e))?;
                Ok(buf)
            }
        }
    }

    /// Decodes the node starting at `offset`.
    pub fn read_node(&self, offset: u64) -> Result<DecodedNode> {
        if offset < PREAMBLE_LEN || offset >= self.file_len {
            return Err(Error::format(offset, "node offset outside the file"));
        }
        let mut window = 512usize;
        loop {
            let buf = self.read(offset, window)?;
            if let Some(node) = decode_node(&buf, offset)? {
                return Ok(node);
            }
            if offset + buf.len() as u64 >= self.file_len {
                return Err(Error::format(offset, "node truncated by end of file"));
            }
            window *= 4;
        }
    }

    /// Offsets and sizes of all nodes, scanning the file front to back.
    pub fn scan(&self) -> Result<Vec<(u64, u64)>> {
        let mut out = Vec::new();
        let mut off = PREAMBLE_LEN;
        while off < self.file_len {
            let n = self.read_node(off)?;
            out.push((off, n.size));
            off += n.size;
        }
        Ok(out)
    }
}

impl TrieSource for DiskTrie {
    type Handle = u64;

    fn root(&self) -> Option<u64> {
        (self.key_count > 0).then_some(self.root)
    }

    fn node(&self, offset: u64) -> Result<NodeView<u64>> {
        Ok(self.read_node(offset)?.view)
    }
}
