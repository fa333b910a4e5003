use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rscas::fixture;

fn fixture_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/sample.tsv")
}

fn rscas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rscas"))
        .env("RSCAS_INDEX_DIR", dir)
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture_index() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture_file();
    let out = stdout(&rscas(dir.path(), &["build", "--tau", "2", f.to_str().unwrap()]));
    assert!(out.contains("keys\t9\n") && out.contains("nodes\t10\n"), "{out}");
    dir
}

fn ref_hex(name: &str) -> String {
    let keys = fixture::sample_keys();
    let k = keys
        .iter()
        .find(|k| fixture::ref_name(&k.reference) == Some(name))
        .unwrap();
    k.reference.to_hex()
}

#[test]
fn fixture_query() {
    let dir = fixture_index();
    let out = stdout(&rscas(dir.path(), &["query", "/fs/ext*/*.c 1577836800 1609459199"]));
    let mut got: Vec<&str> = out.lines().collect();
    got.sort();
    let mut want = vec![ref_hex("r4"), ref_hex("r6")];
    want.sort();
    assert_eq!(got, want);
    let out = stdout(&rscas(dir.path(), &["query", "--count", "/** 0 18446744073709551615"]));
    assert_eq!(out, "9\n");
}

#[test]
fn fixture_stats() {
    let dir = fixture_index();
    let out = stdout(&rscas(dir.path(), &["stats"]));
    assert!(out.starts_with("trie\tstat\tvalue\n"));
    assert!(out.contains("R0\tnodes\t10\n"), "{out}");
    assert!(out.contains("R0\tmax_depth\t4\n"), "{out}");
    assert!(out.contains("R0\tdepth.3\t4\n"), "{out}");
}

#[test]
fn build_errors() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("idx");
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let o = rscas(&idx, &["build", empty.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no keys"));
    assert!(o.stdout.is_empty());
    let bad = dir.path().join("bad.tsv");
    std::fs::write(
        &bad,
        format!("/a\t1\t{}\n/b\tnope\t{}\n", "00".repeat(20), "00".repeat(20)),
    )
    .unwrap();
    let o = rscas(&idx, &["build", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!idx.join("MANIFEST").exists());
}

#[test]
fn query_syntax_error() {
    let dir = fixture_index();
    let o = rscas(dir.path(), &["query", "fs/x 0 1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("position 0"));
}

#[test]
fn insert_staircase_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("idx");
    let input = dir.path().join("keys.tsv");
    let mut text = String::new();
    for i in 0..60u64 {
        text += &format!("/src/f{}.c\t{}\t{:040x}\n", i % 7, i * 31, i);
    }
    std::fs::write(&input, &text).unwrap();
    let out = stdout(&rscas(
        &idx,
        &["insert", "--memory-keys", "10", "--tau", "2", input.to_str().unwrap()],
    ));
    let levels: Vec<&str> = out
        .lines()
        .skip(1)
        .filter(|l| l.starts_with('R'))
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(levels, ["R0", "R1", "R0", "R2", "R0", "R1"]);
    assert!(out.ends_with("inserted\t60\n"));

    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let out = stdout(&rscas(&idx, &["insert", empty.to_str().unwrap()]));
    assert!(out.ends_with("inserted\t0\n"));

    let dup = dir.path().join("dup.tsv");
    std::fs::write(&dup, format!("/src/f3.c\t93\t{:040x}\n", 3)).unwrap();
    stdout(&rscas(&idx, &["insert", dup.to_str().unwrap()]));
    let out = stdout(&rscas(&idx, &["query", "/src/f3.c 93 93"]));
    assert_eq!(out, format!("{0:040x}\n{0:040x}\n", 3));
    let out = stdout(&rscas(&idx, &["query", "--count", "/** 0 18446744073709551615"]));
    assert_eq!(out, "61\n");
}

#[test]
fn analyze_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&rscas(dir.path(), &["analyze", "robustness", "--o", "10", "--h", "12"]));
    assert!(out.contains("I_DY\tVPVPVPVPVPVP\t23436\t39060\t31248\t11047."), "{out}");
    assert!(out.contains("I_PV\tPPPPPPVVVVVV\t113280\t19536\t"), "{out}");
    let out = stdout(&rscas(
        dir.path(),
        &["analyze", "io", "--n", "16", "--m", "4", "--b", "2", "--f", "2"],
    ));
    assert!(
        out.contains("bulk_uniform\t32\n") && out.contains("bulk_skewed\t144\n"),
        "{out}"
    );
    let out = stdout(&rscas(
        dir.path(),
        &[
            "analyze",
            "tau",
            "--tau",
            "10",
            "--prefixes",
            "10",
            "--sigma-c",
            "0.5",
            "--l",
            "12",
        ],
    ));
    assert!(out.contains("expected_distinct_prefixes\t6.5132\n"), "{out}");
}

#[test]
fn missing_index_dir() {
    let o = Command::new(env!("CARGO_BIN_EXE_rscas"))
        .env_remove("RSCAS_INDEX_DIR")
        .args(["stats"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("RSCAS_INDEX_DIR"));
}

#[test]
fn build_spills_under_small_budget() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("keys.tsv");
    let mut text = String::new();
    for i in 0..20_000u64 {
        let h = i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        text += &format!("/d{}/e{}/f{i}\t{}\t{:040x}\n", h % 13, (h >> 8) % 17, h >> 16, i);
    }
    std::fs::write(&input, text).unwrap();
    let idx = dir.path().join("idx");
    let scratch = dir.path().join("tmp");
    let out = stdout(&rscas(
        &idx,
        &[
            "build",
            "--memory-keys",
            "500",
            "--page-size",
            "4096",
            "--scratch",
            scratch.to_str().unwrap(),
            input.to_str().unwrap(),
        ],
    ));
    let field = |k: &str| -> u64 {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}\t")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(field("keys"), 20_000);
    assert!(field("pages_written") > 0 && field("pages_read") > 0, "{out}");
    assert_eq!(field("level"), 6);
    assert!(!idx.join("scratch").exists() || std::fs::read_dir(idx.join("scratch")).unwrap().next().is_none());
    let out = stdout(&rscas(&idx, &["query", "--count", "/d3/** 0 18446744073709551615"]));
    assert!(out.trim().parse::<u64>().unwrap() > 1000);
}
