//! Content-and-structure queries: a path pattern with wildcards plus an
//! inclusive value range.
//!
//! Query paths are `/`-separated labels. In a label `*` matches any run of
//! bytes other than `/`. A label that is exactly `**` matches zero or more
//! whole labels. The pattern is compiled to a small NFA over path bytes so
//! that a traversal can feed it one node slice at a time and stop as soon
//! as no state survives.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::keys::{parse_value, Dimension, RefId, TERMINATOR};
use crate::trie::TrieSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    Match,
    Mismatch,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryLabel {
    /// `**`: zero or more labels.
    Descendant,
    /// Literal bytes and `*` wildcards.
    Pattern(Vec<u8>),
}

#[derive(Debug, Clone, Copy)]
enum Edge {
    Byte(u8),
    // Any byte except '/' and the terminator.
    LabelByte,
}

#[derive(Debug, Clone, Default)]
struct State {
    edges: Vec<(Edge, usize)>,
    eps: Vec<usize>,
}

/// Compiled path pattern.
#[derive(Debug, Clone)]
pub struct PathMatcher {
    states: Vec<State>,
    accept: usize,
    start: StateSet,
}

/// A set of NFA states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet(Vec<u64>);

impl StateSet {
    fn empty(n: usize) -> StateSet {
        StateSet(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.0[w] & b == 0;
        self.0[w] |= b;
        fresh
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(w, &bits)| (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b))
    }
}

impl PathMatcher {
    pub fn compile(labels: &[QueryLabel]) -> PathMatcher {
        let mut states = vec![State::default()];
        let mut cur = 0;
        let add = |states: &mut Vec<State>| {
            states.push(State::default());
            states.len() - 1
        };
        for label in labels {
            match label {
                QueryLabel::Descendant => {
                    let inner = add(&mut states);
                    states[cur].edges.push((Edge::Byte(b'/'), inner));
                    states[inner].edges.push((Edge::LabelByte, inner));
                    states[inner].eps.push(cur);
                }
                QueryLabel::Pattern(bytes) => {
                    let next = add(&mut states);
                    states[cur].edges.push((Edge::Byte(b'/'), next));
                    cur = next;
                    for &b in bytes {
                        if b == b'*' {
                            states[cur].edges.push((Edge::LabelByte, cur));
                        } else {
                            let next = add(&mut states);
                            states[cur].edges.push((Edge::Byte(b), next));
                            cur = next;
                        }
                    }
                }
            }
        }
        let accept = add(&mut states);
        states[cur].edges.push((Edge::Byte(TERMINATOR), accept));
        let mut m = PathMatcher {
            start: StateSet::empty(states.len()),
            states,
            accept,
        };
        let mut start = StateSet::empty(m.states.len());
        m.close(&mut start, 0);
        m.start = start;
        m
    }

    fn close(&self, set: &mut StateSet, s: usize) {
        if set.insert(s) {
            for &e in &self.states[s].eps {
                self.close(set, e);
            }
        }
    }

    pub fn start(&self) -> StateSet {
        self.start.clone()
    }

    pub fn step(&self, set: &StateSet, b: u8) -> StateSet {
        let mut out = StateSet::empty(self.states.len());
        for s in set.iter() {
            for &(edge, to) in &self.states[s].edges {
                let ok = match edge {
                    Edge::Byte(x) => x == b,
                    Edge::LabelByte => b != b'/' && b != TERMINATOR,
                };
                if ok {
                    self.close(&mut out, to);
                }
            }
        }
        out
    }

    pub fn feed(&self, set: &StateSet, bytes: &[u8]) -> StateSet {
        let mut cur = set.clone();
        for &b in bytes {
            if cur.is_empty() {
                break;
            }
            cur = self.step(&cur, b);
        }
        cur
    }

    /// Verdict after consuming a path prefix; `complete` is true once the
    /// terminator has been consumed.
    pub fn outcome(&self, set: &StateSet, complete: bool) -> MatchOutcome {
        if set.is_empty() {
            MatchOutcome::Mismatch
        } else if complete {
            if set.contains(self.accept) {
                MatchOutcome::Match
            } else {
                MatchOutcome::Mismatch
            }
        } else {
            MatchOutcome::Incomplete
        }
    }
}

/// Incremental comparison of a growing value prefix against both bounds.
/// Only the first differing byte against each bound matters, so each
/// comparison stops changing once it leaves `Equal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueState {
    len: usize,
    lo: Ordering,
    hi: Ordering,
}

impl Default for ValueState {
    fn default() -> Self {
        ValueState {
            len: 0,
            lo: Ordering::Equal,
            hi: Ordering::Equal,
        }
    }
}

impl ValueState {
    pub fn push(mut self, q: &CasQuery, b: u8) -> ValueState {
        if self.len < q.low.len() {
            if self.lo == Ordering::Equal {
                self.lo = b.cmp(&q.low[self.len]);
            }
            if self.hi == Ordering::Equal {
                self.hi = b.cmp(&q.high[self.len]);
            }
        }
        self.len += 1;
        self
    }

    pub fn extend(self, q: &CasQuery, bytes: &[u8]) -> ValueState {
        bytes.iter().fold(self, |s, &b| s.push(q, b))
    }

    pub fn outcome(&self, q: &CasQuery) -> MatchOutcome {
        if self.lo == Ordering::Less || self.hi == Ordering::Greater {
            MatchOutcome::Mismatch
        } else if self.len >= q.low.len() || (self.lo == Ordering::Greater && self.hi == Ordering::Less) {
            MatchOutcome::Match
        } else {
            MatchOutcome::Incomplete
        }
    }
}

#[derive(Debug, Clone)]
pub struct CasQuery {
    labels: Vec<QueryLabel>,
    matcher: PathMatcher,
    low: Vec<u8>,
    high: Vec<u8>,
}

impl CasQuery {
    pub fn new(path: &str, low: Vec<u8>, high: Vec<u8>) -> Result<CasQuery> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::QuerySyntax {
                pos: 0,
                reason: "value bounds must be non-empty and of equal length".into(),
            });
        }
        if low > high {
            return Err(Error::QuerySyntax {
                pos: 0,
                reason: "lower bound exceeds upper bound".into(),
            });
        }
        let labels = parse_path(path)?;
        Ok(CasQuery {
            matcher: PathMatcher::compile(&labels),
            labels,
            low,
            high,
        })
    }

    /// Convenience constructor for `u64` bounds with the default encoding.
    pub fn with_range(path: &str, low: u64, high: u64) -> Result<CasQuery> {
        CasQuery::new(path, low.to_be_bytes().to_vec(), high.to_be_bytes().to_vec())
    }

    /// Parses `<path> <low> <high>`; bounds are decimal or `0x` hex.
    pub fn parse(text: &str, value_len: usize) -> Result<CasQuery> {
        let text = text.trim();
        let mut parts = text.rsplitn(3, char::is_whitespace);
        let (Some(high), Some(low), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::QuerySyntax {
                pos: text.len(),
                reason: "expected `<path> <low> <high>`".into(),
            });
        };
        let path = path.trim_end();
        let bound = |tok: &str, at: usize| {
            parse_value(tok, value_len).map_err(|e| Error::QuerySyntax {
                pos: at,
                reason: e.to_string(),
            })
        };
        let low_pos = text.len() - high.len() - 1 - low.len();
        let (low, high) = (bound(low, low_pos)?, bound(high, text.len() - high.len())?);
        if low > high {
            return Err(Error::QuerySyntax {
                pos: low_pos,
                reason: "lower bound exceeds upper bound".into(),
            });
        }
        CasQuery::new(path, low, high)
    }

    pub fn labels(&self) -> &[QueryLabel] {
        &self.labels
    }

    pub fn low(&self) -> &[u8] {
        &self.low
    }

    pub fn high(&self) -> &[u8] {
        &self.high
    }

    pub fn matcher(&self) -> &PathMatcher {
        &self.matcher
    }
}

pub fn parse_path(path: &str) -> Result<Vec<QueryLabel>> {
    let bytes = path.as_bytes();
    if bytes.first() != Some(&b'/') {
        return Err(Error::QuerySyntax {
            pos: 0,
            reason: "query path must start with '/'".into(),
        });
    }
    if let Some(p) = bytes.iter().position(|&b| b == TERMINATOR) {
        return Err(Error::QuerySyntax {
            pos: p,
            reason: "query path contains a 0x00 byte".into(),
        });
    }
    let mut labels = Vec::new();
    let mut start = 1;
    for label in path[1..].split('/') {
        let lb = label.as_bytes();
        if lb.is_empty() {
            return Err(Error::QuerySyntax {
                pos: start,
                reason: "empty label".into(),
            });
        }
        if lb == b"**" {
            labels.push(QueryLabel::Descendant);
        } else if let Some(off) = lb.windows(2).position(|w| w == b"**") {
            return Err(Error::QuerySyntax {
                pos: start + off,
                reason: "'**' must be a whole label".into(),
            });
        } else {
            labels.push(QueryLabel::Pattern(lb.to_vec()));
        }
        start += lb.len() + 1;
    }
    Ok(labels)
}

/// Evaluates the value predicate on a value prefix from scratch.
pub fn match_value(buff_v: &[u8], q: &CasQuery) -> MatchOutcome {
    ValueState::default().extend(q, buff_v).outcome(q)
}

/// Evaluates the path predicate on a path prefix from scratch.
pub fn match_path(buff_p: &[u8], q: &CasQuery) -> MatchOutcome {
    let m = q.matcher();
    let set = m.feed(&m.start(), buff_p);
    m.outcome(&set, buff_p.last() == Some(&TERMINATOR))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: u64,
    pub subtrees_collected: u64,
}

/// Refs of all keys in `src` matching `q`, once per stored key.
pub fn cas_query<S: TrieSource>(src: &S, q: &CasQuery) -> Result<Vec<RefId>> {
    Ok(cas_query_with_stats(src, q)?.0)
}

pub fn cas_query_with_stats<S: TrieSource>(src: &S, q: &CasQuery) -> Result<(Vec<RefId>, QueryStats)> {
    let mut out = Vec::new();
    let mut stats = QueryStats::default();
    if let Some(root) = src.root() {
        let m = q.matcher();
        visit(
            src,
            root,
            q,
            ValueState::default(),
            m.start(),
            false,
            &mut out,
            &mut stats,
        )?;
    }
    Ok((out, stats))
}

#[allow(clippy::too_many_arguments)]
fn visit<S: TrieSource>(
    src: &S,
    h: S::Handle,
    q: &CasQuery,
    vs: ValueState,
    ps: StateSet,
    complete: bool,
    out: &mut Vec<RefId>,
    stats: &mut QueryStats,
) -> Result<()> {
    stats.nodes_visited += 1;
    let node = src.node(h)?;
    let m = q.matcher();
    let vs = vs.extend(q, &node.value);
    let ps = m.feed(&ps, &node.path);
    let complete = complete || node.path.last() == Some(&TERMINATOR);
    let mv = vs.outcome(q);
    let mp = m.outcome(&ps, complete);
    if mv == MatchOutcome::Mismatch || mp == MatchOutcome::Mismatch {
        return Ok(());
    }
    if node.dim == Dimension::Bottom {
        for s in &node.suffixes {
            let sv = vs.extend(q, &s.value);
            let sp = m.feed(&ps, &s.path);
            let sc = complete || s.path.last() == Some(&TERMINATOR);
            if sv.outcome(q) == MatchOutcome::Match && m.outcome(&sp, sc) == MatchOutcome::Match {
                out.push(s.reference);
            }
        }
        return Ok(());
    }
    if mv == MatchOutcome::Match && mp == MatchOutcome::Match {
        stats.subtrees_collected += 1;
        for (_, c) in node.children {
            collect_all(src, c, out)?;
        }
        return Ok(());
    }
    for (b, c) in node.children {
        let keep = match node.dim {
            Dimension::Value => vs.push(q, b).outcome(q) != MatchOutcome::Mismatch,
            _ => !m.step(&ps, b).is_empty(),
        };
        if keep {
            visit(src, c, q, vs, ps.clone(), complete, out, stats)?;
        }
    }
    Ok(())
}

fn collect_all<S: TrieSource>(src: &S, h: S::Handle, out: &mut Vec<RefId>) -> Result<()> {
    let node = src.node(h)?;
    out.extend(node.suffixes.iter().map(|s| s.reference));
    for (_, c) in node.children {
        collect_all(src, c, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disk_trie::{serialize_tree, DiskTrie};
    use crate::{fixture, interleave};

    const LOW_2020: u64 = 1_577_836_800;
    const HIGH_2020: u64 = 1_609_459_199;

    fn q2020() -> CasQuery {
        CasQuery::with_range("/fs/ext*/*.c", LOW_2020, HIGH_2020).unwrap()
    }

    fn names(refs: &[RefId]) -> Vec<&'static str> {
        let mut v: Vec<_> = refs.iter().map(|r| fixture::ref_name(r).unwrap()).collect();
        v.sort();
        v
    }

    #[test]
    fn bounds_encode_as_expected() {
        let q = q2020();
        assert_eq!(q.low(), [0, 0, 0, 0, 0x5E, 0x0B, 0xE1, 0x00]);
        assert_eq!(q.high(), [0, 0, 0, 0, 0x5F, 0xEE, 0x65, 0xFF]);
    }

    #[test]
    fn value_outcomes() {
        let q = q2020();
        assert_eq!(match_value(&[0, 0, 0, 0], &q), MatchOutcome::Incomplete);
        assert_eq!(match_value(&[0, 0, 0, 0, 0x5F, 0xBD], &q), MatchOutcome::Match);
        assert_eq!(match_value(&[0, 0, 0, 0, 0x5D], &q), MatchOutcome::Mismatch);
        assert_eq!(match_value(&[0, 0, 0, 1], &q), MatchOutcome::Mismatch);
        assert_eq!(match_value(&[0, 0, 0, 0, 0x5F, 0xEE], &q), MatchOutcome::Incomplete);
        let point = CasQuery::with_range("/**", 77, 77).unwrap();
        assert_eq!(match_value(&77u64.to_be_bytes(), &point), MatchOutcome::Match);
        assert_eq!(match_value(&78u64.to_be_bytes(), &point), MatchOutcome::Mismatch);
    }

    #[test]
    fn path_outcomes() {
        let q = q2020();
        assert_eq!(match_path(b"/fs/ext3/inode.c\0", &q), MatchOutcome::Match);
        assert_eq!(match_path(b"/fs/ext4/inode.h\0", &q), MatchOutcome::Mismatch);
        assert_eq!(match_path(b"/", &q), MatchOutcome::Incomplete);
        assert_eq!(match_path(b"/fs/ext", &q), MatchOutcome::Incomplete);
        assert_eq!(match_path(b"/c", &q), MatchOutcome::Mismatch);
        let desc = CasQuery::with_range("/**/Makefile", 0, 1).unwrap();
        for prefix in [&b"/"[..], b"/src", b"/src/x/y", b"/Makefile/z", b""] {
            assert_ne!(match_path(prefix, &desc), MatchOutcome::Mismatch, "{prefix:?}");
        }
        assert_eq!(match_path(b"/a/b/Makefile\0", &desc), MatchOutcome::Match);
        assert_eq!(match_path(b"/Makefile\0", &desc), MatchOutcome::Match);
        assert_eq!(match_path(b"/a/Makefile.in\0", &desc), MatchOutcome::Mismatch);
    }

    #[test]
    fn star_stays_within_label() {
        let q = CasQuery::with_range("/a*c", 0, 1).unwrap();
        assert_eq!(match_path(b"/abbbc\0", &q), MatchOutcome::Match);
        assert_eq!(match_path(b"/ac\0", &q), MatchOutcome::Match);
        assert_eq!(match_path(b"/ab/c\0", &q), MatchOutcome::Mismatch);
        let multi = CasQuery::with_range("/*.*", 0, 1).unwrap();
        assert_eq!(match_path(b"/x.tar.gz\0", &multi), MatchOutcome::Match);
        assert_eq!(match_path(b"/xtar\0", &multi), MatchOutcome::Mismatch);
    }

    #[test]
    fn path_grammar() {
        assert!(parse_path("fs/x").is_err());
        assert!(parse_path("/a//b").is_err());
        assert!(parse_path("/a/").is_err());
        assert!(matches!(parse_path("/a**b"), Err(Error::QuerySyntax { pos: 2, .. })));
        assert_eq!(
            parse_path("/**/x*").unwrap(),
            vec![QueryLabel::Descendant, QueryLabel::Pattern(b"x*".to_vec())]
        );
        assert!(CasQuery::with_range("/a", 5, 4).is_err());
    }

    #[test]
    fn parse_query_string() {
        let q = CasQuery::parse("/fs/ext*/*.c 1577836800 1609459199", 8).unwrap();
        assert_eq!(q.low(), q2020().low());
        let q = CasQuery::parse("/a b/c 0x0000000000000001 0x00000000000000FF", 8).unwrap();
        assert_eq!(q.labels().len(), 2);
        assert!(matches!(CasQuery::parse("/a 1", 8), Err(Error::QuerySyntax { .. })));
        assert!(matches!(
            CasQuery::parse("/a x 1", 8),
            Err(Error::QuerySyntax { pos: 3, .. })
        ));
        assert!(matches!(
            CasQuery::parse("/a 9 1", 8),
            Err(Error::QuerySyntax { pos: 3, .. })
        ));
    }

    #[test]
    fn fixture_query() {
        let all = fixture::sample_keys();
        let tree = interleave::reference_trie(&all, 2).unwrap().unwrap();
        let disk = DiskTrie::from_bytes(serialize_tree(Some(&tree), 8).unwrap()).unwrap();
        let (refs, stats) = cas_query_with_stats(&disk, &q2020()).unwrap();
        assert_eq!(names(&refs), ["r4", "r6"]);
        // n1, n7, n8, n10
        assert_eq!(stats.nodes_visited, 4);
        let everything = CasQuery::with_range("/**", 0, u64::MAX).unwrap();
        assert_eq!(cas_query(&disk, &everything).unwrap().len(), 9);
    }
}
