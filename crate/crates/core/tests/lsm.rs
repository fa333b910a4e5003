//! Slot schedule, merge correctness and partition invariance of the
//! LSM arrangement.

mod common;

use common::{arb_keys, arb_query, lcp, oracle, sorted, uniform_keys};
use proptest::prelude::*;
use rscas::bulkload::PageLimit;
use rscas::disk_trie::DiskTrie;
use rscas::trie::collect_keys;
use rscas::{CompositeKey, LsmConfig, LsmIndex, TrieSource};

fn cfg(m: usize) -> LsmConfig {
    LsmConfig {
        memory_keys: m,
        tau: 4,
        page_limit: PageLimit::Keys(8),
        ..LsmConfig::default()
    }
}

fn keys_sorted(mut v: Vec<CompositeKey>) -> Vec<CompositeKey> {
    v.sort();
    v
}

#[test]
fn slot_schedule_follows_binary_counter() {
    let m = 50;
    let keys = uniform_keys(m * 13, 3);
    let dir = tempfile::tempdir().unwrap();
    let mut idx = LsmIndex::create(dir.path(), cfg(m)).unwrap();
    for k in &keys {
        idx.insert(k).unwrap();
        idx.check_invariants().unwrap();
    }
    let levels: Vec<usize> = idx.merges().iter().map(|r| r.level).collect();
    let expect: Vec<usize> = (1..=13u32).map(|j| j.trailing_zeros() as usize).collect();
    assert_eq!(levels, expect);
    for (j, r) in idx.merges().iter().enumerate() {
        let done = j as u64 + 1;
        let occ: Vec<u64> = (0..r.occupancy.len())
            .map(|i| if done >> i & 1 == 1 { (m as u64) << i } else { 0 })
            .collect();
        assert_eq!(r.occupancy, occ, "after merge {done}");
    }
    assert_eq!(keys_sorted(idx.keys().unwrap()), keys_sorted(keys));
}

fn root_slices(t: &DiskTrie) -> (usize, usize) {
    let v = t.node(t.root().unwrap()).unwrap();
    (v.path.len(), v.value.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn merges_preserve_keys_and_root_prefixes(keys in arb_keys(150), m in 2usize..12) {
        let dir = tempfile::tempdir().unwrap();
        let mut idx = LsmIndex::create(dir.path(), cfg(m)).unwrap();
        for k in &keys {
            idx.insert(k).unwrap();
            prop_assert!(idx.check_invariants().is_ok());
        }
        prop_assert_eq!(keys_sorted(idx.keys().unwrap()), keys_sorted(keys.clone()));
        prop_assert_eq!(idx.len(), keys.len() as u64);
        for (_, t) in idx.levels() {
            let stored = collect_keys(t).unwrap();
            let all: Vec<&CompositeKey> = stored.iter().collect();
            prop_assert_eq!(root_slices(t), (lcp(&all, true), lcp(&all, false)));
        }
    }

    #[test]
    fn query_results_do_not_depend_on_split(keys in arb_keys(150), m in 2usize..12, q in arb_query()) {
        let dir = tempfile::tempdir().unwrap();
        let mut idx = LsmIndex::create(dir.path(), cfg(m)).unwrap();
        for k in &keys {
            idx.insert(k).unwrap();
        }
        let single = tempfile::tempdir().unwrap();
        let (whole, _) = LsmIndex::build(single.path(), cfg(m), keys.clone()).unwrap();
        let cq = q.compile();
        let want = oracle(&keys, &q);
        prop_assert_eq!(sorted(idx.query(&cq).unwrap()), want.clone());
        prop_assert_eq!(sorted(whole.query(&cq).unwrap()), want);
    }
}

#[test]
fn background_mode_sees_pre_or_post_merge_state() {
    let keys = uniform_keys(2_000, 11);
    let dir = tempfile::tempdir().unwrap();
    let mut idx = LsmIndex::create(
        dir.path(),
        LsmConfig {
            background: true,
            ..cfg(100)
        },
    )
    .unwrap();
    let all = rscas::CasQuery::with_range("/**", 0, u64::MAX).unwrap();
    let mut busy = 0;
    for (n, k) in keys.iter().enumerate() {
        loop {
            match idx.insert(k) {
                Ok(()) => break,
                Err(rscas::Error::Busy) => {
                    busy += 1;
                    idx.wait_for_merge().unwrap();
                }
                Err(e) => panic!("{e}"),
            }
        }
        if n % 97 == 0 {
            assert_eq!(idx.query(&all).unwrap().len(), n + 1);
        }
    }
    idx.wait_for_merge().unwrap();
    idx.check_invariants().unwrap();
    assert_eq!(idx.query(&all).unwrap().len(), keys.len());
    eprintln!("busy signals: {busy}");
}

#[test]
fn close_and_reopen_round_trip() {
    let keys = uniform_keys(730, 5);
    let dir = tempfile::tempdir().unwrap();
    let mut idx = LsmIndex::create(dir.path(), cfg(100)).unwrap();
    for k in &keys {
        idx.insert(k).unwrap();
    }
    let occ = idx.occupancy();
    idx.close().unwrap();
    let idx = LsmIndex::open(dir.path(), false).unwrap();
    assert_eq!(idx.occupancy(), occ);
    assert_eq!(keys_sorted(idx.keys().unwrap()), keys_sorted(keys));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(names.is_empty(), "{names:?}");
}
