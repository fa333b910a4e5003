//! Brute-force oracles and random generators shared by the integration
//! tests. Nothing here uses the index's own matching code.

#![allow(dead_code)]

use proptest::prelude::*;
use rscas::{CompositeKey, RefId};

/// A CAS query in oracle form.
#[derive(Debug, Clone)]
pub struct OracleQuery {
    pub path: String,
    pub low: u64,
    pub high: u64,
}

impl OracleQuery {
    pub fn compile(&self) -> rscas::CasQuery {
        rscas::CasQuery::with_range(&self.path, self.low, self.high).expect("generated query is valid")
    }
}

/// Glob match of one label against a pattern where `*` matches any run.
pub fn glob(pat: &[u8], s: &[u8]) -> bool {
    match pat.split_first() {
        None => s.is_empty(),
        Some((b'*', rest)) => (0..=s.len()).any(|i| glob(rest, &s[i..])),
        Some((c, rest)) => s.first() == Some(c) && glob(rest, &s[1..]),
    }
}

fn match_labels(q: &[&[u8]], p: &[&[u8]]) -> bool {
    match q.split_first() {
        None => p.is_empty(),
        Some((&b"**", rest)) => (0..=p.len()).any(|i| match_labels(rest, &p[i..])),
        Some((pat, rest)) => !p.is_empty() && glob(pat, p[0]) && match_labels(rest, &p[1..]),
    }
}

/// Does the stored path (with its terminator) match the query path?
pub fn path_matches(query: &str, stored: &[u8]) -> bool {
    let Some((&0, raw)) = stored.split_last() else {
        return false;
    };
    let labels: Vec<&[u8]> = if raw.is_empty() {
        Vec::new()
    } else if raw[0] == b'/' {
        raw[1..].split(|&b| b == b'/').collect()
    } else {
        return false;
    };
    let q: Vec<&[u8]> = query.as_bytes()[1..].split(|&b| b == b'/').collect();
    match_labels(&q, &labels)
}

pub fn key_matches(q: &OracleQuery, k: &CompositeKey) -> bool {
    let v = u64::from_be_bytes(k.value.as_slice().try_into().expect("8-byte values"));
    q.low <= v && v <= q.high && path_matches(&q.path, &k.path)
}

/// Sorted refs of all matching keys, with multiplicity.
pub fn oracle(keys: &[CompositeKey], q: &OracleQuery) -> Vec<RefId> {
    let mut out: Vec<RefId> = keys.iter().filter(|k| key_matches(q, k)).map(|k| k.reference).collect();
    out.sort();
    out
}

pub fn sorted(mut v: Vec<RefId>) -> Vec<RefId> {
    v.sort();
    v
}

const LABELS: &[&str] = &["a", "b", "ab", "ba", "src", "x.c", "y.h", "abc", ""];

pub fn arb_path() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(LABELS), 1..5).prop_map(|ls| format!("/{}", ls.join("/")))
}

/// Values clustered so that keys share value prefixes of varied length.
pub fn arb_value() -> impl Strategy<Value = u64> {
    prop_oneof![
        0u64..4,
        (0u64..4).prop_map(|x| x << 8),
        (0u64..3).prop_map(|x| 0x5E0B_E100 + x * 0x0101),
        (0u64..3).prop_map(|x| x << 56 | 7),
        any::<u64>(),
    ]
}

pub fn arb_key() -> impl Strategy<Value = CompositeKey> {
    (arb_path(), arb_value(), any::<u8>()).prop_map(|(p, v, r)| {
        let mut reference = [0u8; 20];
        reference[0] = r;
        reference[19] = r.wrapping_mul(31);
        CompositeKey::from_parts(p.as_bytes(), v, RefId(reference)).expect("generated key is valid")
    })
}

/// Key multisets with deliberate duplicates.
pub fn arb_keys(max: usize) -> impl Strategy<Value = Vec<CompositeKey>> {
    prop::collection::vec(arb_key(), 1..max).prop_flat_map(|keys| {
        let n = keys.len();
        (Just(keys), prop::collection::vec(0..n, 0..3)).prop_map(|(mut keys, dups)| {
            for i in dups {
                keys.push(keys[i].clone());
            }
            keys
        })
    })
}

const QUERY_LABELS: &[&str] = &["a", "b", "ab", "*", "**", "a*", "*b", "src", "*.c", "x.*", "s*c", "*a*"];

pub fn arb_query() -> impl Strategy<Value = OracleQuery> {
    (
        prop::collection::vec(prop::sample::select(QUERY_LABELS), 1..5),
        arb_value(),
        arb_value(),
        any::<bool>(),
    )
        .prop_map(|(ls, a, b, wide)| {
            let (low, high) = if wide { (0, u64::MAX) } else { (a.min(b), a.max(b)) };
            OracleQuery {
                path: format!("/{}", ls.join("/")),
                low,
                high,
            }
        })
}

/// Deterministic uniform keys for scale tests: random path labels and
/// random 8-byte values.
pub fn uniform_keys(n: usize, seed: u64) -> Vec<CompositeKey> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let depth = rng.gen_range(1..5);
            let mut path = String::new();
            for _ in 0..depth {
                path.push('/');
                let len = rng.gen_range(1..8);
                for _ in 0..len {
                    path.push(rng.gen_range(b'a'..=b'z') as char);
                }
            }
            let mut r = [0u8; 20];
            rng.fill(&mut r);
            r[..8].copy_from_slice(&(i as u64).to_be_bytes());
            CompositeKey::from_parts(path.as_bytes(), rng.gen(), RefId(r)).expect("valid key")
        })
        .collect()
}

/// Longest common prefix length over a key set in one dimension.
pub fn lcp(keys: &[&CompositeKey], path: bool) -> usize {
    let get = |k: &CompositeKey| if path { k.path.clone() } else { k.value.clone() };
    let first = get(keys[0]);
    keys.iter().fold(first.len(), |n, k| {
        let other = get(k);
        first.iter().zip(&other).take(n).take_while(|(a, b)| a == b).count()
    })
}

/// First violated ψ property for `keys` split in `dim`, if any.
pub fn psi_violation(keys: &[CompositeKey], dim: rscas::Dimension) -> Option<String> {
    use rscas::interleave::{psi, refs};
    let path = dim == rscas::Dimension::Path;
    let get = |k: &CompositeKey| if path { k.path.clone() } else { k.value.clone() };
    let all = refs(keys);
    let groups = psi(&all, dim).ok()?.groups(&all);
    if groups.iter().map(Vec::len).sum::<usize>() != keys.len() {
        return Some("groups do not cover the input".into());
    }
    let whole = lcp(&all, path);
    if !all.iter().all(|k| get(k) == get(all[0])) && groups.len() < 2 {
        return Some("no progress".into());
    }
    for (i, gi) in groups.iter().enumerate() {
        for gj in &groups[i + 1..] {
            if !gi.iter().all(|a| gj.iter().all(|b| get(a) < get(b))) {
                return Some(format!("groups {i} and later overlap in order"));
            }
            let union: Vec<&CompositeKey> = gi.iter().chain(gj.iter()).copied().collect();
            let u = lcp(&union, path);
            if lcp(gi, path) <= u || whole != u {
                return Some(format!("group {i} does not preserve prefixes"));
            }
        }
        if gi.len() < keys.len() && (lcp(gi, path) <= whole || lcp(gi, !path) < lcp(&all, !path)) {
            return Some(format!("group {i} breaks monotonicity"));
        }
    }
    None
}
