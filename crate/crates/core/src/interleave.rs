//! Set-at-a-time partitioning and dynamic interleaving.
//!
//! Everything here works on whole key sets held in memory and recomputes
//! discriminative bytes from scratch. It is the reference the scalable
//! builders are checked against.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::keys::{dsc, CompositeKey, Dimension, RefId};
use crate::trie::{Suffix, TrieNode};

/// Outcome of partitioning a key set at its discriminative byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PsiResult<'a> {
    /// Groups keyed by their byte at the discriminative position, in
    /// ascending byte order.
    Split(BTreeMap<u8, Vec<&'a CompositeKey>>),
    /// All keys are identical in the dimension; no progress is possible.
    Exhausted,
}

impl<'a> PsiResult<'a> {
    /// The partitions as key sets. An exhausted result yields the input as
    /// its only group.
    pub fn groups(self, input: &[&'a CompositeKey]) -> Vec<Vec<&'a CompositeKey>> {
        match self {
            PsiResult::Split(map) => map.into_values().collect(),
            PsiResult::Exhausted => vec![input.to_vec()],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PsiResult::Split(map) => map.len(),
            PsiResult::Exhausted => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Borrowed view of an owned key slice, the input shape of this module.
pub fn refs(keys: &[CompositeKey]) -> Vec<&CompositeKey> {
    keys.iter().collect()
}

/// Groups `keys` by their byte at `dsc(keys, dim)`.
pub fn psi<'a>(keys: &[&'a CompositeKey], dim: Dimension) -> Result<PsiResult<'a>> {
    if dim == Dimension::Bottom {
        return Err(Error::NoAlternate(dim));
    }
    let pos = dsc(keys.iter().copied(), dim)? - 1;
    if pos >= keys[0].get(dim).len() {
        return Ok(PsiResult::Exhausted);
    }
    let mut groups: BTreeMap<u8, Vec<&'a CompositeKey>> = BTreeMap::new();
    for &k in keys {
        let b = *k
            .get(dim)
            .get(pos)
            .ok_or_else(|| Error::InvalidKey(format!("key set is not prefix-free in dimension {dim}")))?;
        groups.entry(b).or_default().push(k);
    }
    Ok(PsiResult::Split(groups))
}

/// The partition of `psi(keys, dim)` that contains `k`.
pub fn psi_of_key<'a>(k: &CompositeKey, keys: &[&'a CompositeKey], dim: Dimension) -> Result<Vec<&'a CompositeKey>> {
    if !keys.contains(&k) {
        return Err(Error::NotMember);
    }
    match psi(keys, dim)? {
        PsiResult::Exhausted => Ok(keys.to_vec()),
        PsiResult::Split(mut map) => {
            let pos = dsc(keys.iter().copied(), dim)? - 1;
            Ok(map.remove(&k.get(dim)[pos]).unwrap_or_default())
        }
    }
}

/// One element `(K_i, D_i)` of a partitioning sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitioningStep<'a> {
    pub keys: Vec<&'a CompositeKey>,
    pub dim: Dimension,
}

/// The chain of nested partitions that contain `k`, starting at `keys`.
pub fn partitioning_sequence<'a>(
    k: &CompositeKey,
    keys: &[&'a CompositeKey],
    start_dim: Dimension,
    tau: usize,
) -> Result<Vec<PartitioningStep<'a>>> {
    if start_dim == Dimension::Bottom {
        return Err(Error::NoAlternate(start_dim));
    }
    if !keys.contains(&k) {
        return Err(Error::NotMember);
    }
    let mut steps = Vec::new();
    let mut current = keys.to_vec();
    let mut dim = start_dim;
    loop {
        if current.len() > tau {
            let sub = psi_of_key(k, &current, dim)?;
            if sub.len() < current.len() {
                steps.push(PartitioningStep { keys: current, dim });
                current = sub;
                dim = dim.flip();
                continue;
            }
            if psi_of_key(k, &current, dim.flip())?.len() < current.len() {
                dim = dim.flip();
                continue;
            }
        }
        steps.push(PartitioningStep {
            keys: current,
            dim: Dimension::Bottom,
        });
        return Ok(steps);
    }
}

/// One interleaved tuple. `value_first` records the presentation order:
/// the value slice is shown first when the previous step split on values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tuple {
    pub path: Vec<u8>,
    pub value: Vec<u8>,
    pub dim: Dimension,
    pub value_first: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavedKey {
    pub tuples: Vec<Tuple>,
    pub suffix: Suffix,
}

impl InterleavedKey {
    /// Concatenates the slices back into `(path, value)`.
    pub fn reconstruct(&self) -> (Vec<u8>, Vec<u8>) {
        let mut path = Vec::new();
        let mut value = Vec::new();
        for t in &self.tuples {
            path.extend_from_slice(&t.path);
            value.extend_from_slice(&t.value);
        }
        path.extend_from_slice(&self.suffix.path);
        value.extend_from_slice(&self.suffix.value);
        (path, value)
    }

    /// Human-readable rendering, e.g. `((00 00 00 00, /, V), ..., (r.go$, ε, r7))`.
    /// Path bytes print as text with `$` for the terminator, value bytes as hex.
    pub fn render(&self, name: impl Fn(&RefId) -> String) -> String {
        let mut out = String::from("(");
        for t in &self.tuples {
            let (a, b) = if t.value_first {
                (render_value(&t.value), render_path(&t.path))
            } else {
                (render_path(&t.path), render_value(&t.value))
            };
            let _ = write!(out, "({a}, {b}, {}), ", t.dim);
        }
        let _ = write!(
            out,
            "({}, {}, {}))",
            render_path(&self.suffix.path),
            render_value(&self.suffix.value),
            name(&self.suffix.reference)
        );
        out
    }
}

pub fn render_path(bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return "ε".into();
    }
    bytes
        .iter()
        .map(|&b| match b {
            0 => '$',
            0x20..=0x7e => b as char,
            _ => char::REPLACEMENT_CHARACTER,
        })
        .collect()
}

pub fn render_value(bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return "ε".into();
    }
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

/// Dynamic interleaving of `k` with respect to `keys`.
pub fn dynamic_interleave(k: &CompositeKey, keys: &[&CompositeKey], tau: usize) -> Result<InterleavedKey> {
    let steps = partitioning_sequence(k, keys, Dimension::Value, tau)?;
    let (mut prev_p, mut prev_v, mut prev_dim) = (0usize, 0usize, Dimension::Value);
    let mut tuples = Vec::with_capacity(steps.len());
    for step in &steps {
        let gp = dsc(step.keys.iter().copied(), Dimension::Path)? - 1;
        let gv = dsc(step.keys.iter().copied(), Dimension::Value)? - 1;
        tuples.push(Tuple {
            path: k.path[prev_p..gp].to_vec(),
            value: k.value[prev_v..gv].to_vec(),
            dim: step.dim,
            value_first: prev_dim == Dimension::Value,
        });
        (prev_p, prev_v, prev_dim) = (gp, gv, step.dim);
    }
    Ok(InterleavedKey {
        tuples,
        suffix: Suffix {
            path: k.path[prev_p..].to_vec(),
            value: k.value[prev_v..].to_vec(),
            reference: k.reference,
        },
    })
}

/// Builds the trie whose root-to-leaf paths are the dynamic interleavings
/// of all keys, with terminal partitions of at most `tau` keys.
pub fn reference_trie(keys: &[CompositeKey], tau: usize) -> Result<Option<TrieNode>> {
    if keys.is_empty() {
        return Ok(None);
    }
    let all = refs(keys);
    build(&all, Dimension::Value, 0, 0, tau.max(1)).map(Some)
}

fn build(keys: &[&CompositeKey], dim: Dimension, from_p: usize, from_v: usize, tau: usize) -> Result<TrieNode> {
    let gp = dsc(keys.iter().copied(), Dimension::Path)? - 1;
    let gv = dsc(keys.iter().copied(), Dimension::Value)? - 1;
    let first = keys[0];
    let mut node = TrieNode {
        dim: Dimension::Bottom,
        path: first.path[from_p..gp].to_vec(),
        value: first.value[from_v..gv].to_vec(),
        children: Vec::new(),
        suffixes: Vec::new(),
    };
    if keys.len() > tau {
        let split = match psi(keys, dim)? {
            PsiResult::Split(groups) => Some((dim, groups)),
            PsiResult::Exhausted => match psi(keys, dim.flip())? {
                PsiResult::Split(groups) => Some((dim.flip(), groups)),
                PsiResult::Exhausted => None,
            },
        };
        if let Some((d, groups)) = split {
            node.dim = d;
            for (b, group) in groups {
                node.children.push((b, build(&group, d.flip(), gp, gv, tau)?));
            }
            return Ok(node);
        }
    }
    node.suffixes = keys
        .iter()
        .map(|k| Suffix {
            path: k.path[gp..].to_vec(),
            value: k.value[gv..].to_vec(),
            reference: k.reference,
        })
        .collect();
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    fn pick<'a>(all: &'a [CompositeKey], ids: &[usize]) -> Vec<&'a CompositeKey> {
        ids.iter().map(|&i| &all[i - 1]).collect()
    }

    #[test]
    fn psi_examples() {
        let all = fixture::sample_keys();
        let k = refs(&all);
        let PsiResult::Split(groups) = psi(&k, Dimension::Value).unwrap() else {
            panic!("expected split")
        };
        assert_eq!(groups.keys().copied().collect::<Vec<_>>(), [0x5D, 0x5E, 0x5F]);
        assert_eq!(groups[&0x5D], pick(&all, &[1, 4, 8, 9]));
        assert_eq!(groups[&0x5E], pick(&all, &[5, 6]));
        assert_eq!(groups[&0x5F], pick(&all, &[2, 3, 7]));

        let sub = pick(&all, &[1, 4, 8, 9]);
        let PsiResult::Split(groups) = psi(&sub, Dimension::Path).unwrap() else {
            panic!("expected split")
        };
        assert_eq!(groups[&b'M'], pick(&all, &[1]));
        assert_eq!(groups[&b'S'], pick(&all, &[4, 8, 9]));

        let one = pick(&all, &[3]);
        assert_eq!(psi(&one, Dimension::Path).unwrap(), PsiResult::Exhausted);
        assert_eq!(psi(&one, Dimension::Path).unwrap().groups(&one), vec![one.clone()]);
    }

    #[test]
    fn psi_of_key_examples() {
        let all = fixture::sample_keys();
        let k = refs(&all);
        assert_eq!(
            psi_of_key(&all[8], &k, Dimension::Value).unwrap(),
            pick(&all, &[1, 4, 8, 9])
        );
        let sub = pick(&all, &[1, 4, 8, 9]);
        assert_eq!(
            psi_of_key(&all[8], &sub, Dimension::Path).unwrap(),
            pick(&all, &[4, 8, 9])
        );
        assert!(matches!(
            psi_of_key(&all[1], &sub, Dimension::Path),
            Err(Error::NotMember)
        ));
    }

    #[test]
    fn sequence_for_k9() {
        let all = fixture::sample_keys();
        let k = refs(&all);
        let seq = partitioning_sequence(&all[8], &k, Dimension::Value, 2).unwrap();
        let got: Vec<(Vec<&CompositeKey>, Dimension)> = seq.into_iter().map(|s| (s.keys, s.dim)).collect();
        assert_eq!(
            got,
            vec![
                (k.clone(), Dimension::Value),
                (pick(&all, &[1, 4, 8, 9]), Dimension::Path),
                (pick(&all, &[4, 8, 9]), Dimension::Value),
                (pick(&all, &[8, 9]), Dimension::Bottom),
            ]
        );
        let seq1 = partitioning_sequence(&all[8], &k, Dimension::Value, 1).unwrap();
        assert_eq!(seq1.len(), 5);
        assert_eq!(seq1[3].keys, pick(&all, &[8, 9]));
        assert_eq!(seq1[3].dim, Dimension::Path);
        assert_eq!(seq1[4].keys, pick(&all, &[9]));

        let single = pick(&all, &[2]);
        let s = partitioning_sequence(&all[1], &single, Dimension::Value, 5).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].dim, Dimension::Bottom);
    }

    #[test]
    fn sequence_switches_dimension_when_exhausted() {
        let r = RefId::default();
        let a = CompositeKey::from_parts(b"/a", 7, r).unwrap();
        let b = CompositeKey::from_parts(b"/b", 7, r).unwrap();
        let keys = vec![&a, &b];
        let seq = partitioning_sequence(&a, &keys, Dimension::Value, 1).unwrap();
        assert_eq!(seq[0].dim, Dimension::Path);
        assert_eq!(seq.len(), 2);
    }

    #[test]
    fn interleave_k9_and_k5() {
        let all = fixture::sample_keys();
        let k = refs(&all);
        let i9 = dynamic_interleave(&all[8], &k, 2).unwrap();
        let t: Vec<_> = i9
            .tuples
            .iter()
            .map(|t| (t.value.clone(), t.path.clone(), t.dim))
            .collect();
        assert_eq!(
            t,
            vec![
                (vec![0, 0, 0, 0], b"/".to_vec(), Dimension::Value),
                (vec![0x5D, 0xA8], b"Sources/".to_vec(), Dimension::Path),
                (vec![], b"Sche".to_vec(), Dimension::Value),
                (vec![0x97, 0x8B], b"dule".to_vec(), Dimension::Bottom),
            ]
        );
        assert_eq!(i9.suffix.path, b"r.go\0");
        assert!(i9.suffix.value.is_empty());

        let i5 = dynamic_interleave(&all[4], &k, 2).unwrap();
        assert_eq!(i5.tuples.len(), 2);
        assert_eq!(i5.tuples[1].value, [0x5E]);
        assert_eq!(i5.tuples[1].path, b"fs/ext");
        assert_eq!(i5.suffix.path, b"3/inode.c\0");
        assert_eq!(i5.suffix.value, [0xF2, 0x9C, 0x59]);
        assert_eq!(
            i5.render(|r| fixture::ref_name(r).unwrap().to_string()),
            "((00 00 00 00, /, V), (5E, fs/ext, ⊥), (3/inode.c$, F2 9C 59, r4))"
        );
    }

    #[test]
    fn reference_trie_shape() {
        let all = fixture::sample_keys();
        let root = reference_trie(&all, 2).unwrap().unwrap();
        assert_eq!(root.dim, Dimension::Value);
        assert_eq!(root.value, [0, 0, 0, 0]);
        assert_eq!(root.path, b"/");
        assert_eq!(root.node_count(), 10);
        assert!(reference_trie(&[], 2).unwrap().is_none());
    }
}
