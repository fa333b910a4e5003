//! The nine-key example data set used throughout the tests and examples.

use crate::keys::{read_records, CompositeKey, DEFAULT_VALUE_LEN};

const SAMPLE: &str = include_str!("../fixtures/sample.tsv");

/// Keys `k1..k9` in order.
pub fn sample_keys() -> Vec<CompositeKey> {
    read_records(SAMPLE.as_bytes(), DEFAULT_VALUE_LEN).expect("bundled fixture parses")
}

/// The key inserted into the example trie to demonstrate lazy restructuring.
pub fn k10() -> CompositeKey {
    CompositeKey::from_parts(
        b"/crypto/rsa.c",
        0x5F83_B9AC,
        crate::keys::RefId::from_hex("5a1bd3e0c2000000000000000000000000000000").expect("valid hex"),
    )
    .expect("valid key")
}

/// Short display name (`r1`..`r8`) of a fixture reference.
pub fn ref_name(r: &crate::keys::RefId) -> Option<&'static str> {
    const NAMES: [(&str, &str); 8] = [
        ("a1a606b0b3", "r1"),
        ("d44739d8f8", "r2"),
        ("41d17a7b4d", "r3"),
        ("9698d9f506", "r4"),
        ("ffcaae8f57", "r5"),
        ("688d973cbe", "r6"),
        ("9907ee0a7b", "r7"),
        ("5a1bd3e0c2", "r8"),
    ];
    let hex = r.to_hex();
    NAMES
        .iter()
        .find(|(prefix, _)| hex.starts_with(prefix) && hex[10..].bytes().all(|c| c == b'0'))
        .map(|(_, name)| *name)
}
