//! Mutable in-memory trie with adaptive fanout and lazy restructuring.
//!
//! Nodes live in an arena and refer to each other by [`NodeId`]. Inner
//! nodes start with room for four children and grow through 16 and 48 to
//! 256 slots as children are added. A new key either extends an existing
//! leaf, hangs a new leaf under an inner node, or splits a node at the
//! first mismatching byte by adding exactly one parent and one sibling.

use crate::error::{Error, Result};
use crate::keys::{CompositeKey, Dimension};
use crate::trie::{self, NodeView, Suffix, TrieNode, TrieSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Physical fanout class of an inner node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeClass {
    N4,
    N16,
    N48,
    N256,
}

impl NodeClass {
    pub fn capacity(self) -> usize {
        match self {
            NodeClass::N4 => 4,
            NodeClass::N16 => 16,
            NodeClass::N48 => 48,
            NodeClass::N256 => 256,
        }
    }

    /// Smallest class that holds `n` children.
    pub fn for_len(n: usize) -> NodeClass {
        match n {
            0..=4 => NodeClass::N4,
            5..=16 => NodeClass::N16,
            17..=48 => NodeClass::N48,
            _ => NodeClass::N256,
        }
    }
}

#[derive(Debug, Clone)]
enum ChildMap {
    // Sorted key arrays.
    N4 { len: u8, keys: [u8; 4], ids: [NodeId; 4] },
    N16 { len: u8, keys: [u8; 16], ids: [NodeId; 16] },
    // index[b] is 1 + slot in ids, 0 when absent.
    N48 { index: Box<[u8; 256]>, ids: Vec<NodeId> },
    N256 { ids: Box<[Option<NodeId>; 256]>, len: u16 },
}

const NIL: NodeId = NodeId(u32::MAX);

impl ChildMap {
    fn new() -> ChildMap {
        ChildMap::N4 {
            len: 0,
            keys: [0; 4],
            ids: [NIL; 4],
        }
    }

    fn class(&self) -> NodeClass {
        match self {
            ChildMap::N4 { .. } => NodeClass::N4,
            ChildMap::N16 { .. } => NodeClass::N16,
            ChildMap::N48 { .. } => NodeClass::N48,
            ChildMap::N256 { .. } => NodeClass::N256,
        }
    }

    fn len(&self) -> usize {
        match self {
            ChildMap::N4 { len, .. } | ChildMap::N16 { len, .. } => *len as usize,
            ChildMap::N48 { ids, .. } => ids.len(),
            ChildMap::N256 { len, .. } => *len as usize,
        }
    }

    fn get(&self, b: u8) -> Option<NodeId> {
        match self {
            ChildMap::N4 { len, keys, ids } => sorted_find(&keys[..*len as usize], b).ok().map(|i| ids[i]),
            ChildMap::N16 { len, keys, ids } => sorted_find(&keys[..*len as usize], b).ok().map(|i| ids[i]),
            ChildMap::N48 { index, ids } => match index[b as usize] {
                0 => None,
                slot => Some(ids[slot as usize - 1]),
            },
            ChildMap::N256 { ids, .. } => ids[b as usize],
        }
    }

    /// Inserts or replaces the child reached via `b`, growing the node
    /// when it is full.
    fn set(&mut self, b: u8, id: NodeId) {
        match self {
            ChildMap::N4 { len, keys, ids } => {
                if sorted_set(keys, ids, len, b, id) {
                    return;
                }
            }
            ChildMap::N16 { len, keys, ids } => {
                if sorted_set(keys, ids, len, b, id) {
                    return;
                }
            }
            ChildMap::N48 { index, ids } => {
                let slot = index[b as usize];
                if slot != 0 {
                    ids[slot as usize - 1] = id;
                    return;
                }
                if ids.len() < 48 {
                    ids.push(id);
                    index[b as usize] = ids.len() as u8;
                    return;
                }
            }
            ChildMap::N256 { ids, len } => {
                if ids[b as usize].replace(id).is_none() {
                    *len += 1;
                }
                return;
            }
        }
        self.grow();
        self.set(b, id);
    }

    fn grow(&mut self) {
        let entries = self.entries();
        *self = match self.class() {
            NodeClass::N4 => {
                let mut keys = [0u8; 16];
                let mut ids = [NIL; 16];
                for (i, (b, id)) in entries.iter().enumerate() {
                    keys[i] = *b;
                    ids[i] = *id;
                }
                ChildMap::N16 {
                    len: entries.len() as u8,
                    keys,
                    ids,
                }
            }
            NodeClass::N16 => {
                let mut index = Box::new([0u8; 256]);
                let mut ids = Vec::with_capacity(48);
                for (b, id) in entries {
                    ids.push(id);
                    index[b as usize] = ids.len() as u8;
                }
                ChildMap::N48 { index, ids }
            }
            NodeClass::N48 | NodeClass::N256 => {
                let mut ids = Box::new([None; 256]);
                for (b, id) in &entries {
                    ids[*b as usize] = Some(*id);
                }
                ChildMap::N256 {
                    ids,
                    len: entries.len() as u16,
                }
            }
        };
    }

    /// Children in ascending byte order.
    fn entries(&self) -> Vec<(u8, NodeId)> {
        match self {
            ChildMap::N4 { len, keys, ids } => keys[..*len as usize].iter().copied().zip(ids.iter().copied()).collect(),
            ChildMap::N16 { len, keys, ids } => {
                keys[..*len as usize].iter().copied().zip(ids.iter().copied()).collect()
            }
            ChildMap::N48 { index, ids } => (0..=255u8)
                .filter(|&b| index[b as usize] != 0)
                .map(|b| (b, ids[index[b as usize] as usize - 1]))
                .collect(),
            ChildMap::N256 { ids, .. } => (0..=255u8).filter_map(|b| ids[b as usize].map(|id| (b, id))).collect(),
        }
    }
}

fn sorted_find(keys: &[u8], b: u8) -> std::result::Result<usize, usize> {
    keys.binary_search(&b)
}

/// Returns false when the array is full and `b` is new.
fn sorted_set<const N: usize>(keys: &mut [u8; N], ids: &mut [NodeId; N], len: &mut u8, b: u8, id: NodeId) -> bool {
    let n = *len as usize;
    match sorted_find(&keys[..n], b) {
        Ok(i) => {
            ids[i] = id;
            true
        }
        Err(_) if n == N => false,
        Err(i) => {
            keys.copy_within(i..n, i + 1);
            ids.copy_within(i..n, i + 1);
            keys[i] = b;
            ids[i] = id;
            *len += 1;
            true
        }
    }
}

#[derive(Debug, Clone)]
struct MemNode {
    dim: Dimension,
    path: Vec<u8>,
    value: Vec<u8>,
    children: ChildMap,
    suffixes: Vec<Suffix>,
}

impl MemNode {
    fn slice(&self, dim: Dimension) -> &[u8] {
        match dim {
            Dimension::Path => &self.path,
            _ => &self.value,
        }
    }
}

/// The mutable trie. Holds at most `capacity` keys.
#[derive(Debug, Clone)]
pub struct MemTrie {
    nodes: Vec<MemNode>,
    root: Option<NodeId>,
    len: usize,
    capacity: usize,
    value_len: usize,
}

impl MemTrie {
    pub fn new(capacity: usize, value_len: usize) -> MemTrie {
        MemTrie {
            nodes: Vec::new(),
            root: None,
            len: 0,
            capacity,
            value_len,
        }
    }

    pub fn unbounded(value_len: usize) -> MemTrie {
        MemTrie::new(usize::MAX, value_len)
    }

    /// Number of stored keys, duplicates included.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn value_len(&self) -> usize {
        self.value_len
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_id(&self) -> Option<NodeId> {
        self.root
    }

    /// Fanout class and child count of a node.
    pub fn node_class(&self, id: NodeId) -> (NodeClass, usize) {
        let c = &self.nodes[id.index()].children;
        (c.class(), c.len())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.index()].dim == Dimension::Bottom
    }

    fn alloc(&mut self, node: MemNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() as u32 - 1)
    }

    fn leaf(path: &[u8], value: &[u8], k: &CompositeKey) -> MemNode {
        MemNode {
            dim: Dimension::Bottom,
            path: path.to_vec(),
            value: value.to_vec(),
            children: ChildMap::new(),
            suffixes: vec![Suffix {
                path: Vec::new(),
                value: Vec::new(),
                reference: k.reference,
            }],
        }
    }

    pub fn insert(&mut self, k: &CompositeKey) -> Result<()> {
        if k.value.len() != self.value_len {
            return Err(Error::InvalidKey(format!(
                "value has {} bytes, the index uses {}",
                k.value.len(),
                self.value_len
            )));
        }
        if self.is_full() {
            return Err(Error::TrieFull(self.len));
        }
        self.insert_key(k)?;
        self.len += 1;
        Ok(())
    }

    fn insert_key(&mut self, k: &CompositeKey) -> Result<()> {
        let Some(mut n) = self.root else {
            let id = self.alloc(Self::leaf(&k.path, &k.value, k));
            self.root = Some(id);
            return Ok(());
        };
        let mut parent: Option<(NodeId, u8)> = None;
        let (mut gp, mut gv) = (0usize, 0usize);
        loop {
            let node = &self.nodes[n.index()];
            let ip = common(&node.path, &k.path[gp..]);
            let iv = common(&node.value, &k.value[gv..]);
            gp += ip;
            gv += iv;
            if ip < node.path.len() || iv < node.value.len() {
                return self.lazy_restructure(k, n, parent, gp, gv, ip, iv);
            }
            if node.dim == Dimension::Bottom {
                let suffix = Suffix {
                    path: k.path[gp..].to_vec(),
                    value: k.value[gv..].to_vec(),
                    reference: k.reference,
                };
                self.nodes[n.index()].suffixes.push(suffix);
                return Ok(());
            }
            let b = match node.dim {
                Dimension::Path => k.path.get(gp),
                _ => k.value.get(gv),
            }
            .copied()
            .ok_or_else(not_prefix_free)?;
            match node.children.get(b) {
                Some(c) => {
                    parent = Some((n, b));
                    n = c;
                }
                None => {
                    let id = self.alloc(Self::leaf(&k.path[gp..], &k.value[gv..], k));
                    self.nodes[n.index()].children.set(b, id);
                    return Ok(());
                }
            }
        }
    }

    /// Splits `n` at the first mismatching bytes `ip`/`iv` by adding a new
    /// parent that keeps the common slices and a sibling leaf for `k`.
    #[allow(clippy::too_many_arguments)]
    fn lazy_restructure(
        &mut self,
        k: &CompositeKey,
        n: NodeId,
        parent: Option<(NodeId, u8)>,
        gp: usize,
        gv: usize,
        ip: usize,
        iv: usize,
    ) -> Result<()> {
        let node = &self.nodes[n.index()];
        let path_mismatch = ip < node.path.len();
        let value_mismatch = iv < node.value.len();
        let dim = match (path_mismatch, value_mismatch) {
            (true, false) => Dimension::Path,
            (false, true) => Dimension::Value,
            _ => match parent {
                Some((p, _)) => self.nodes[p.index()].dim.flip(),
                None => Dimension::Value,
            },
        };
        let par = MemNode {
            dim,
            path: node.path[..ip].to_vec(),
            value: node.value[..iv].to_vec(),
            children: ChildMap::new(),
            suffixes: Vec::new(),
        };
        let sib = Self::leaf(&k.path[gp..], &k.value[gv..], k);
        let b_sib = *sib.slice(dim).first().ok_or_else(not_prefix_free)?;

        let node = &mut self.nodes[n.index()];
        node.path.drain(..ip);
        node.value.drain(..iv);
        let b_old = node.slice(dim)[0];

        let sib_id = self.alloc(sib);
        let par_id = self.alloc(par);
        let children = &mut self.nodes[par_id.index()].children;
        children.set(b_sib, sib_id);
        children.set(b_old, n);
        match parent {
            None => self.root = Some(par_id),
            Some((p, b)) => self.nodes[p.index()].children.set(b, par_id),
        }
        Ok(())
    }

    /// Every stored key, once per suffix entry.
    pub fn keys(&self) -> Vec<CompositeKey> {
        trie::collect_keys(self).expect("in-memory traversal cannot fail")
    }

    pub fn to_tree(&self) -> Option<TrieNode> {
        trie::to_tree(self).expect("in-memory traversal cannot fail")
    }

    /// Loads an existing tree, e.g. one produced by the reference builder.
    pub fn from_tree(tree: &TrieNode, capacity: usize, value_len: usize) -> MemTrie {
        let mut t = MemTrie::new(capacity, value_len);
        let root = t.copy_in(tree);
        t.root = Some(root);
        t
    }

    fn copy_in(&mut self, n: &TrieNode) -> NodeId {
        self.len += n.suffixes.len();
        let id = self.alloc(MemNode {
            dim: n.dim,
            path: n.path.clone(),
            value: n.value.clone(),
            children: ChildMap::new(),
            suffixes: n.suffixes.clone(),
        });
        for (b, c) in &n.children {
            let cid = self.copy_in(c);
            self.nodes[id.index()].children.set(*b, cid);
        }
        id
    }

    /// Drops all keys, keeping capacity and value length.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.root = None;
        self.len = 0;
    }
}

fn common(a: &[u8], b: &[u8]) -> usize {
    crate::keys::common_prefix_len(a, b)
}

fn not_prefix_free() -> Error {
    Error::InvalidKey("key conflicts with the prefix-free layout of the trie".into())
}

impl TrieSource for MemTrie {
    type Handle = NodeId;

    fn root(&self) -> Option<NodeId> {
        self.root
    }

    fn node(&self, id: NodeId) -> Result<NodeView<NodeId>> {
        let n = &self.nodes[id.index()];
        Ok(NodeView {
            dim: n.dim,
            path: n.path.clone(),
            value: n.value.clone(),
            children: n.children.entries(),
            suffixes: n.suffixes.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::RefId;
    use crate::{fixture, interleave};

    fn key(path: &str, value: u64, r: u8) -> CompositeKey {
        CompositeKey::from_parts(path.as_bytes(), value, RefId([r; 20])).unwrap()
    }

    #[test]
    fn child_map_grows_through_classes() {
        let mut m = ChildMap::new();
        for (i, b) in (0..=255u8).rev().enumerate() {
            m.set(b, NodeId(b as u32));
            assert_eq!(m.class(), NodeClass::for_len(i + 1));
            assert_eq!(m.len(), i + 1);
        }
        let e = m.entries();
        assert_eq!(e.len(), 256);
        assert!(e.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(m.get(7), Some(NodeId(7)));
        m.set(7, NodeId(1000));
        assert_eq!(m.get(7), Some(NodeId(1000)));
        assert_eq!(m.len(), 256);
    }

    #[test]
    fn child_map_sorted_small_classes() {
        let mut m = ChildMap::new();
        for b in [9u8, 3, 200, 1, 50, 7] {
            m.set(b, NodeId(b as u32));
        }
        assert_eq!(m.class(), NodeClass::N16);
        let bytes: Vec<u8> = m.entries().iter().map(|e| e.0).collect();
        assert_eq!(bytes, [1, 3, 7, 9, 50, 200]);
        assert_eq!(m.get(4), None);
    }

    #[test]
    fn empty_insert_creates_leaf_root() {
        let mut t = MemTrie::unbounded(8);
        let k = key("/a/b", 5, 1);
        t.insert(&k).unwrap();
        let root = t.to_tree().unwrap();
        assert!(root.is_leaf());
        assert_eq!(root.path, k.path);
        assert_eq!(root.value, k.value);
        assert_eq!(root.suffixes.len(), 1);
        assert_eq!(t.keys(), vec![k]);
    }

    #[test]
    fn duplicate_insert_keeps_both() {
        let mut t = MemTrie::unbounded(8);
        let k = key("/a", 1, 1);
        t.insert(&k).unwrap();
        t.insert(&k).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.keys(), vec![k.clone(), k]);
    }

    #[test]
    fn capacity_is_enforced() {
        let mut t = MemTrie::new(2, 8);
        t.insert(&key("/a", 1, 1)).unwrap();
        t.insert(&key("/b", 1, 1)).unwrap();
        assert!(matches!(t.insert(&key("/c", 1, 1)), Err(Error::TrieFull(2))));
        assert!(t
            .insert(&CompositeKey::new(b"/x\0".to_vec(), vec![1], RefId::default()).unwrap())
            .is_err());
    }

    #[test]
    fn k10_lazy_restructuring() {
        let all = fixture::sample_keys();
        let tree = interleave::reference_trie(&all, 2).unwrap().unwrap();
        let mut t = MemTrie::from_tree(&tree, usize::MAX, 8);
        assert_eq!(t.len(), 9);
        let before = t.node_count();
        t.insert(&fixture::k10()).unwrap();
        assert_eq!(t.node_count(), before + 2);
        let root = t.to_tree().unwrap();
        let (b, npar) = &root.children[2];
        assert_eq!(*b, 0x5F);
        assert_eq!(
            (npar.value.as_slice(), npar.path.as_slice(), npar.dim),
            (&[0x5F][..], &b""[..], Dimension::Value)
        );
        assert_eq!(npar.children.len(), 2);
        let (b_sib, sib) = &npar.children[0];
        assert_eq!(*b_sib, 0x83);
        assert_eq!(sib.value, [0x83, 0xB9, 0xAC]);
        assert_eq!(sib.path, b"crypto/rsa.c\0");
        assert!(sib.is_leaf());
        assert_eq!(sib.suffixes.len(), 1);
        assert!(sib.suffixes[0].path.is_empty() && sib.suffixes[0].value.is_empty());
        let (b_n8, n8) = &npar.children[1];
        assert_eq!(*b_n8, 0xBD);
        assert_eq!(
            (n8.value.as_slice(), n8.path.as_slice(), n8.dim),
            (&[0xBD][..], &b""[..], Dimension::Path)
        );
        assert_eq!(n8.children.len(), 2);
        assert_eq!(t.len(), 10);
        let mut got = t.keys();
        let mut want = all.clone();
        want.push(fixture::k10());
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn both_dimensions_mismatch_uses_parent_alternate() {
        let mut t = MemTrie::unbounded(8);
        // Mismatch in both dimensions at the root defaults to V.
        t.insert(&key("/aa", 0x0100, 1)).unwrap();
        t.insert(&key("/ab", 0x0200, 2)).unwrap();
        let root = t.to_tree().unwrap();
        assert_eq!(root.dim, Dimension::Value);
        assert_eq!(root.path, b"/a");
        // Below a V parent, a double mismatch splits in P.
        t.insert(&key("/ac", 0x0101, 3)).unwrap();
        let root = t.to_tree().unwrap();
        let (b, child) = &root.children[0];
        assert_eq!(*b, 0x01);
        assert_eq!(child.dim, Dimension::Path);
        assert_eq!(child.value, [0x01]);
        assert!(child.path.is_empty());
        assert_eq!(t.keys().len(), 3);
    }

    #[test]
    fn classes_track_child_counts() {
        let mut t = MemTrie::unbounded(8);
        for i in 0..300u64 {
            t.insert(&key(&format!("/f{i}"), i * 7919 % 256, (i % 251) as u8))
                .unwrap();
        }
        for id in t.node_ids() {
            if !t.is_leaf(id) {
                let (class, n) = t.node_class(id);
                assert_eq!(class, NodeClass::for_len(n));
            }
        }
        assert_eq!(t.keys().len(), 300);
    }
}
