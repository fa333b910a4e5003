//! Trie shapes shared by the in-memory trie, the disk trie and the
//! reference builder, plus traversal helpers that work on any of them.

use crate::error::Result;
use crate::keys::{CompositeKey, Dimension, RefId};

/// Non-interleaved remainder of a key stored in a leaf.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Suffix {
    pub path: Vec<u8>,
    pub value: Vec<u8>,
    pub reference: RefId,
}

/// Owned trie node. Inner nodes have children and a splitting dimension;
/// leaves have `Dimension::Bottom` and a multiset of suffixes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrieNode {
    pub dim: Dimension,
    pub path: Vec<u8>,
    pub value: Vec<u8>,
    pub children: Vec<(u8, TrieNode)>,
    pub suffixes: Vec<Suffix>,
}

impl TrieNode {
    pub fn is_leaf(&self) -> bool {
        self.dim == Dimension::Bottom
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|(_, c)| c.node_count()).sum::<usize>()
    }

    /// Sorts every suffix multiset so structurally equal tries compare equal
    /// regardless of insertion order.
    pub fn canonicalize(&mut self) {
        self.suffixes.sort();
        for (_, c) in &mut self.children {
            c.canonicalize();
        }
    }

    pub fn canonical(mut self) -> TrieNode {
        self.canonicalize();
        self
    }

    /// Nodes in pre-order.
    pub fn preorder(&self) -> Vec<&TrieNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for (_, c) in n.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }
}

/// A node as seen through [`TrieSource`]: its slices and either child
/// handles (ascending by byte) or suffixes.
#[derive(Debug, Clone)]
pub struct NodeView<H> {
    pub dim: Dimension,
    pub path: Vec<u8>,
    pub value: Vec<u8>,
    pub children: Vec<(u8, H)>,
    pub suffixes: Vec<Suffix>,
}

/// Read access to a trie, whatever its storage.
pub trait TrieSource {
    type Handle: Copy;

    fn root(&self) -> Option<Self::Handle>;

    fn node(&self, handle: Self::Handle) -> Result<NodeView<Self::Handle>>;
}

/// Exposes an owned [`TrieNode`] tree through [`TrieSource`].
#[derive(Debug, Clone, Copy)]
pub struct TreeSource<'t>(pub Option<&'t TrieNode>);

impl<'t> TrieSource for TreeSource<'t> {
    type Handle = &'t TrieNode;

    fn root(&self) -> Option<&'t TrieNode> {
        self.0
    }

    fn node(&self, n: &'t TrieNode) -> Result<NodeView<&'t TrieNode>> {
        Ok(NodeView {
            dim: n.dim,
            path: n.path.clone(),
            value: n.value.clone(),
            children: n.children.iter().map(|(b, c)| (*b, c)).collect(),
            suffixes: n.suffixes.clone(),
        })
    }
}

/// Calls `f` with every stored key, reconstructed from the node slices on
/// its root-to-leaf path. Duplicates are reported once per suffix entry.
pub fn for_each_key<S: TrieSource>(src: &S, mut f: impl FnMut(CompositeKey) -> Result<()>) -> Result<()> {
    let Some(root) = src.root() else {
        return Ok(());
    };
    let mut path = Vec::new();
    let mut value = Vec::new();
    walk_keys(src, root, &mut path, &mut value, &mut f)
}

fn walk_keys<S: TrieSource>(
    src: &S,
    h: S::Handle,
    path: &mut Vec<u8>,
    value: &mut Vec<u8>,
    f: &mut impl FnMut(CompositeKey) -> Result<()>,
) -> Result<()> {
    let node = src.node(h)?;
    let (lp, lv) = (path.len(), value.len());
    path.extend_from_slice(&node.path);
    value.extend_from_slice(&node.value);
    for s in &node.suffixes {
        let mut p = path.clone();
        p.extend_from_slice(&s.path);
        let mut v = value.clone();
        v.extend_from_slice(&s.value);
        f(CompositeKey {
            path: p,
            value: v,
            reference: s.reference,
        })?;
    }
    for (_, c) in node.children {
        walk_keys(src, c, path, value, f)?;
    }
    path.truncate(lp);
    value.truncate(lv);
    Ok(())
}

/// Streams the stored keys of a trie in pre-order without materializing
/// the whole key set.
pub struct KeyIter<'a, S: TrieSource> {
    src: &'a S,
    stack: Vec<(S::Handle, usize, usize)>,
    pending: std::vec::IntoIter<CompositeKey>,
    path: Vec<u8>,
    value: Vec<u8>,
}

impl<'a, S: TrieSource> KeyIter<'a, S> {
    pub fn new(src: &'a S) -> Self {
        KeyIter {
            src,
            stack: src.root().map(|r| (r, 0, 0)).into_iter().collect(),
            pending: Vec::new().into_iter(),
            path: Vec::new(),
            value: Vec::new(),
        }
    }
}

impl<S: TrieSource> Iterator for KeyIter<'_, S> {
    type Item = Result<CompositeKey>;

    fn next(&mut self) -> Option<Result<CompositeKey>> {
        loop {
            if let Some(k) = self.pending.next() {
                return Some(Ok(k));
            }
            let (h, lp, lv) = self.stack.pop()?;
            let node = match self.src.node(h) {
                Ok(n) => n,
                Err(e) => {
                    self.stack.clear();
                    return Some(Err(e));
                }
            };
            self.path.truncate(lp);
            self.value.truncate(lv);
            self.path.extend_from_slice(&node.path);
            self.value.extend_from_slice(&node.value);
            let keys: Vec<CompositeKey> = node
                .suffixes
                .into_iter()
                .map(|s| CompositeKey {
                    path: [&self.path[..], &s.path].concat(),
                    value: [&self.value[..], &s.value].concat(),
                    reference: s.reference,
                })
                .collect();
            self.pending = keys.into_iter();
            let (lp, lv) = (self.path.len(), self.value.len());
            for (_, c) in node.children.into_iter().rev() {
                self.stack.push((c, lp, lv));
            }
        }
    }
}

pub fn collect_keys<S: TrieSource>(src: &S) -> Result<Vec<CompositeKey>> {
    let mut out = Vec::new();
    for_each_key(src, |k| {
        out.push(k);
        Ok(())
    })?;
    Ok(out)
}

/// Materializes any trie as an owned tree.
pub fn to_tree<S: TrieSource>(src: &S) -> Result<Option<TrieNode>> {
    fn go<S: TrieSource>(src: &S, h: S::Handle) -> Result<TrieNode> {
        let v = src.node(h)?;
        let mut children = Vec::with_capacity(v.children.len());
        for (b, c) in v.children {
            children.push((b, go(src, c)?));
        }
        Ok(TrieNode {
            dim: v.dim,
            path: v.path,
            value: v.value,
            children,
            suffixes: v.suffixes,
        })
    }
    src.root().map(|r| go(src, r)).transpose()
}
