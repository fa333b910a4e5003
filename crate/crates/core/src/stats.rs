//! Structural statistics of a trie.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::trie::TrieSource;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrieStats {
    pub node_count: u64,
    pub inner_nodes: u64,
    pub leaf_nodes: u64,
    pub key_count: u64,
    /// Nodes per depth; the root is at depth 1.
    pub depth_histogram: BTreeMap<usize, u64>,
    /// Inner nodes per child count.
    pub fanout_histogram: BTreeMap<usize, u64>,
    pub max_depth: usize,
    /// Mean depth of leaves.
    pub avg_leaf_depth: f64,
    /// Children per inner node.
    pub avg_fanout: f64,
}

impl TrieStats {
    /// Depth a trie with this fanout would have for its key count.
    pub fn expected_depth(&self, tau: u64) -> Option<f64> {
        (self.avg_fanout > 1.0 && self.key_count > 0).then(|| expected_depth(self.avg_fanout, self.key_count, tau))
    }
}

/// log_f ⌈N/τ⌉.
pub fn expected_depth(fanout: f64, n: u64, tau: u64) -> f64 {
    (n.div_ceil(tau) as f64).ln() / fanout.ln()
}

pub fn trie_stats<S: TrieSource>(src: &S) -> Result<TrieStats> {
    let mut st = TrieStats::default();
    let Some(root) = src.root() else {
        return Ok(st);
    };
    let mut leaf_depths = 0u64;
    let mut children = 0u64;
    let mut stack = vec![(root, 1usize)];
    while let Some((h, depth)) = stack.pop() {
        let node = src.node(h)?;
        st.node_count += 1;
        *st.depth_histogram.entry(depth).or_default() += 1;
        st.max_depth = st.max_depth.max(depth);
        if node.children.is_empty() {
            st.leaf_nodes += 1;
            st.key_count += node.suffixes.len() as u64;
            leaf_depths += depth as u64;
        } else {
            st.inner_nodes += 1;
            children += node.children.len() as u64;
            *st.fanout_histogram.entry(node.children.len()).or_default() += 1;
            stack.extend(node.children.into_iter().map(|(_, c)| (c, depth + 1)));
        }
    }
    if st.leaf_nodes > 0 {
        st.avg_leaf_depth = leaf_depths as f64 / st.leaf_nodes as f64;
    }
    if st.inner_nodes > 0 {
        st.avg_fanout = children as f64 / st.inner_nodes as f64;
    }
    Ok(st)
}
