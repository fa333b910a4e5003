//! The index proper: a mutable in-memory trie plus immutable disk tries
//! R_0, R_1, ... where R_0 holds at most M keys and R_i (i ≥ 1) holds
//! between 2^(i-1)·M (exclusive) and 2^i·M (inclusive) keys.
//!
//! When the in-memory trie fills up it is merged together with
//! R_0..R_{i-1} into the first empty slot R_i. Merges either run inline or
//! on a background thread while a second in-memory trie takes insertions.
//!
//! On disk an index directory holds a `MANIFEST` text file, one
//! `r<level>-<generation>.rscas` file per occupied slot, a `scratch/`
//! directory for bulk-loading and, after [`LsmIndex::close`], the
//! in-memory keys in `mem.pending`.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::bulkload::{
    BulkLoadConfig, BulkLoadReport, BulkLoader, FileWriter, IoCounters, PageLimit, DEFAULT_PAGE_SIZE,
};
use crate::disk_trie::DiskTrie;
use crate::error::{Error, Result};
use crate::keys::{format_record, read_records, CompositeKey, RefId, DEFAULT_VALUE_LEN};
use crate::mem_trie::MemTrie;
use crate::query::{cas_query, CasQuery};
use crate::stats::{trie_stats, TrieStats};
use crate::trie::KeyIter;

pub const MANIFEST: &str = "MANIFEST";
pub const PENDING: &str = "mem.pending";
const SCRATCH: &str = "scratch";
const MANIFEST_HEADER: &str = "rscas-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsmConfig {
    /// Capacity M of the in-memory trie, in keys.
    pub memory_keys: usize,
    pub tau: usize,
    pub value_len: usize,
    pub page_limit: PageLimit,
    /// Run merges on a background thread.
    pub background: bool,
    /// Where merges put partition files; defaults to `scratch/` inside
    /// the index directory. Not persisted.
    pub scratch_dir: Option<PathBuf>,
}

impl Default for LsmConfig {
    fn default() -> Self {
        LsmConfig {
            memory_keys: 10_000,
            tau: 100,
            value_len: DEFAULT_VALUE_LEN,
            page_limit: PageLimit::Bytes(DEFAULT_PAGE_SIZE),
            background: false,
            scratch_dir: None,
        }
    }
}

/// Outcome of one overflow merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub level: usize,
    pub generation: u64,
    pub keys: u64,
    pub nodes: u64,
    pub bytes: u64,
    pub io: IoCounters,
    /// Occupancy of every slot right after the merge.
    pub occupancy: Vec<u64>,
}

#[derive(Debug)]
struct Level {
    file: String,
    keys: u64,
    trie: Arc<DiskTrie>,
}

struct Merged {
    level: usize,
    generation: u64,
    file: String,
    report: BulkLoadReport,
}

/// Keys per slot capacity class: R_0 ≤ M, R_i in (2^(i-1)·M, 2^i·M].
pub fn level_for(keys: u64, m: u64) -> usize {
    let mut i = 0;
    let mut cap = m;
    while keys > cap {
        cap = cap.saturating_mul(2);
        i += 1;
    }
    i
}

pub struct LsmIndex {
    dir: PathBuf,
    cfg: LsmConfig,
    mem: MemTrie,
    frozen: Option<Arc<MemTrie>>,
    job: Option<JoinHandle<Result<Merged>>>,
    levels: Vec<Option<Level>>,
    generation: u64,
    merges: Vec<MergeReport>,
    read_only: bool,
}

impl std::fmt::Debug for LsmIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LsmIndex")
            .field("dir", &self.dir)
            .field("cfg", &self.cfg)
            .field("mem", &self.mem.len())
            .field("occupancy", &self.occupancy())
            .finish()
    }
}

impl LsmIndex {
    /// Creates an empty index in `dir`, which must not hold one yet.
    pub fn create(dir: impl Into<PathBuf>, cfg: LsmConfig) -> Result<LsmIndex> {
        let dir = dir.into();
        if cfg.memory_keys == 0 || cfg.tau == 0 || cfg.value_len == 0 {
            return Err(Error::Manifest(
                "memory_keys, tau and value_len must be positive".into(),
            ));
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io("creating index directory", &dir, e))?;
        if dir.join(MANIFEST).exists() {
            return Err(Error::Manifest(format!("{} already holds an index", dir.display())));
        }
        let idx = LsmIndex::empty(dir, cfg);
        idx.write_manifest()?;
        Ok(idx)
    }

    fn empty(dir: PathBuf, cfg: LsmConfig) -> LsmIndex {
        LsmIndex {
            mem: MemTrie::new(cfg.memory_keys, cfg.value_len),
            dir,
            cfg,
            frozen: None,
            job: None,
            levels: Vec::new(),
            generation: 0,
            merges: Vec::new(),
            read_only: false,
        }
    }

    /// Opens an existing index. `background` is not persisted and is taken
    /// from the argument.
    pub fn open(dir: impl Into<PathBuf>, background: bool) -> Result<LsmIndex> {
        let mut idx = LsmIndex::load(dir.into(), background)?;
        let pending = idx.dir.join(PENDING);
        if pending.exists() {
            let f = File::open(&pending).map_err(|e| Error::io("reading pending keys", &pending, e))?;
            for k in read_records(BufReader::new(f), idx.cfg.value_len)? {
                idx.insert(&k)?;
            }
            idx.wait_for_merge()?;
            fs::remove_file(&pending).map_err(|e| Error::io("removing pending keys", &pending, e))?;
        }
        Ok(idx)
    }

    /// Opens an index for queries only. Nothing in `dir` is modified;
    /// [`insert`](Self::insert) fails and [`close`](Self::close) is a no-op.
    pub fn open_read_only(dir: impl Into<PathBuf>) -> Result<LsmIndex> {
        let mut idx = LsmIndex::load(dir.into(), false)?;
        idx.read_only = true;
        idx.mem = MemTrie::unbounded(idx.cfg.value_len);
        let pending = idx.dir.join(PENDING);
        if pending.exists() {
            let f = File::open(&pending).map_err(|e| Error::io("reading pending keys", &pending, e))?;
            for k in read_records(BufReader::new(f), idx.cfg.value_len)? {
                idx.mem.insert(&k)?;
            }
        }
        Ok(idx)
    }

    /// Puts merge scratch files under `dir` instead of the index directory.
    pub fn set_scratch_dir(&mut self, dir: Option<PathBuf>) {
        self.cfg.scratch_dir = dir;
    }

    fn load(dir: PathBuf, background: bool) -> Result<LsmIndex> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io("reading manifest", &path, e))?;
        let (cfg, generation, entries) = parse_manifest(&text, background)?;
        let mut idx = LsmIndex::empty(dir, cfg);
        idx.generation = generation;
        for (level, file, keys) in entries {
            let trie = DiskTrie::open(idx.dir.join(&file))?;
            if trie.key_count() != keys {
                return Err(Error::Manifest(format!(
                    "{file} holds {} keys, manifest says {keys}",
                    trie.key_count()
                )));
            }
            if idx.levels.len() <= level {
                idx.levels.resize_with(level + 1, || None);
            }
            idx.levels[level] = Some(Level {
                file,
                keys,
                trie: Arc::new(trie),
            });
        }
        Ok(idx)
    }

    /// Bulk-loads `keys` into a new index as a single disk trie placed in
    /// the slot matching its size.
    pub fn build<I>(dir: impl Into<PathBuf>, cfg: LsmConfig, keys: I) -> Result<(LsmIndex, BulkLoadReport)>
    where
        I: IntoIterator<Item = CompositeKey>,
    {
        let mut idx = LsmIndex::create(dir, cfg)?;
        let tmp = idx.dir.join("build.tmp");
        let result = (|| {
            let mut w = FileWriter::create(&tmp)?;
            let report = BulkLoader::new(idx.bulk_config(0))?.build(keys, &mut w)?;
            w.sync()?;
            Ok(report)
        })();
        let report = match result {
            Ok(r) => r,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                let _ = fs::remove_file(idx.dir.join(MANIFEST));
                return Err(e);
            }
        };
        idx.generation += 1;
        let level = level_for(report.key_count, idx.cfg.memory_keys as u64);
        let file = format!("r{level}-{}.rscas", idx.generation);
        idx.publish(&tmp, &file)?;
        let trie = DiskTrie::open(idx.dir.join(&file))?;
        idx.levels.resize_with(level + 1, || None);
        idx.levels[level] = Some(Level {
            file,
            keys: report.key_count,
            trie: Arc::new(trie),
        });
        idx.write_manifest()?;
        Ok((idx, report))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &LsmConfig {
        &self.cfg
    }

    /// Total stored keys, duplicates included.
    pub fn len(&self) -> u64 {
        self.mem.len() as u64
            + self.frozen.as_ref().map_or(0, |m| m.len() as u64)
            + self.levels.iter().flatten().map(|l| l.keys).sum::<u64>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mem_len(&self) -> usize {
        self.mem.len()
    }

    /// Key count of every slot R_0..R_k; 0 for empty slots.
    pub fn occupancy(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.as_ref().map_or(0, |l| l.keys)).collect()
    }

    /// Occupied slots with their tries.
    pub fn levels(&self) -> impl Iterator<Item = (usize, &DiskTrie)> {
        self.levels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|l| (i, &*l.trie)))
    }

    pub fn merges(&self) -> &[MergeReport] {
        &self.merges
    }

    pub fn merge_running(&self) -> bool {
        self.job.is_some()
    }

    /// Checks the slot capacities.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let m = self.cfg.memory_keys as u64;
        for (i, slot) in self.levels.iter().enumerate() {
            let Some(l) = slot else { continue };
            let ok = if i == 0 {
                l.keys <= m
            } else {
                l.keys > m << (i - 1) && l.keys <= m << i
            };
            if !ok {
                return Err(format!("R_{i} holds {} keys with M = {m}", l.keys));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, k: &CompositeKey) -> Result<()> {
        if self.read_only {
            return Err(Error::ReadOnly);
        }
        self.poll()?;
        if self.mem.is_full() {
            if self.job.is_some() {
                return Err(Error::Busy);
            }
            self.start_overflow()?;
            if self.mem.is_full() {
                return Err(Error::Busy);
            }
        }
        self.mem.insert(k)?;
        if self.mem.is_full() && self.job.is_none() {
            self.start_overflow()?;
        }
        Ok(())
    }

    /// Installs a finished background merge, if any.
    pub fn poll(&mut self) -> Result<()> {
        if self.job.as_ref().is_some_and(|j| j.is_finished()) {
            self.wait_for_merge()?;
        }
        Ok(())
    }

    /// Blocks until the running background merge, if any, is installed.
    pub fn wait_for_merge(&mut self) -> Result<()> {
        let Some(job) = self.job.take() else {
            return Ok(());
        };
        let merged = job
            .join()
            .map_err(|_| Error::Manifest("merge thread panicked".into()))?;
        // On failure the frozen trie stays in place, queryable, and the
        // next overflow retries merging it.
        let m = merged?;
        self.frozen = None;
        self.install(m)
    }

    fn bulk_config(&self, generation: u64) -> BulkLoadConfig {
        BulkLoadConfig {
            tau: self.cfg.tau,
            memory_keys: self.cfg.memory_keys as u64,
            page_limit: self.cfg.page_limit,
            scratch_dir: self
                .cfg
                .scratch_dir
                .as_deref()
                .unwrap_or(&self.dir.join(SCRATCH))
                .join(format!("g{generation}")),
            value_len: self.cfg.value_len,
        }
    }

    fn start_overflow(&mut self) -> Result<()> {
        let level = self
            .levels
            .iter()
            .position(Option::is_none)
            .unwrap_or(self.levels.len());
        let generation = self.generation + 1;
        let file = format!("r{level}-{generation}.rscas");
        let tries: Vec<Arc<DiskTrie>> = self.levels[..level]
            .iter()
            .map(|l| {
                l.as_ref()
                    .expect("slots below the first empty one are full")
                    .trie
                    .clone()
            })
            .collect();
        let bulk = self.bulk_config(generation);
        let dir = self.dir.clone();
        if self.cfg.background {
            let frozen = match &self.frozen {
                Some(f) => f.clone(),
                None => {
                    let fresh = MemTrie::new(self.cfg.memory_keys, self.cfg.value_len);
                    Arc::new(std::mem::replace(&mut self.mem, fresh))
                }
            };
            self.frozen = Some(frozen.clone());
            self.job = Some(std::thread::spawn(move || {
                let report = merge_into(&dir, &file, bulk, &frozen, &tries)?;
                Ok(Merged {
                    level,
                    generation,
                    file,
                    report,
                })
            }));
            Ok(())
        } else {
            let report = merge_into(&dir, &file, bulk, &self.mem, &tries)?;
            self.mem.clear();
            self.install(Merged {
                level,
                generation,
                file,
                report,
            })
        }
    }

    fn install(&mut self, m: Merged) -> Result<()> {
        let trie = DiskTrie::open(self.dir.join(&m.file))?;
        if self.levels.len() <= m.level {
            self.levels.resize_with(m.level + 1, || None);
        }
        let old: Vec<String> = self.levels[..m.level]
            .iter_mut()
            .filter_map(|s| s.take().map(|l| l.file))
            .collect();
        self.levels[m.level] = Some(Level {
            file: m.file,
            keys: m.report.key_count,
            trie: Arc::new(trie),
        });
        self.generation = m.generation;
        self.write_manifest()?;
        for f in old {
            let p = self.dir.join(&f);
            fs::remove_file(&p).map_err(|e| Error::io("removing merged trie", &p, e))?;
        }
        self.merges.push(MergeReport {
            level: m.level,
            generation: m.generation,
            keys: m.report.key_count,
            nodes: m.report.node_count,
            bytes: m.report.bytes_written,
            io: m.report.io,
            occupancy: self.occupancy(),
        });
        log::debug!("merged {} keys into R_{}", m.report.key_count, m.level);
        Ok(())
    }

    fn publish(&self, tmp: &Path, file: &str) -> Result<()> {
        let dst = self.dir.join(file);
        fs::rename(tmp, &dst).map_err(|e| Error::io("publishing trie file", &dst, e))?;
        sync_dir(&self.dir)
    }

    fn write_manifest(&self) -> Result<()> {
        let mut text = format!(
            "{MANIFEST_HEADER}\ntau {}\nmemory_keys {}\nvalue_length {}\n",
            self.cfg.tau, self.cfg.memory_keys, self.cfg.value_len
        );
        match self.cfg.page_limit {
            PageLimit::Bytes(n) => text += &format!("page_size {n}\n"),
            PageLimit::Keys(n) => text += &format!("page_keys {n}\n"),
        }
        text += &format!("generation {}\n", self.generation);
        for (i, slot) in self.levels.iter().enumerate() {
            if let Some(l) = slot {
                text += &format!("level {i} {} {}\n", l.file, l.keys);
            }
        }
        write_atomic(&self.dir, MANIFEST, text.as_bytes())
    }

    pub fn query(&self, q: &CasQuery) -> Result<Vec<RefId>> {
        let mut out = cas_query(&self.mem, q)?;
        if let Some(f) = &self.frozen {
            out.extend(cas_query(&**f, q)?);
        }
        for l in self.levels.iter().flatten() {
            out.extend(cas_query(&*l.trie, q)?);
        }
        Ok(out)
    }

    /// Structure statistics per trie, labelled `mem`, `frozen` or `R<i>`.
    pub fn stats(&self) -> Result<Vec<(String, TrieStats)>> {
        let mut out = vec![("mem".to_string(), trie_stats(&self.mem)?)];
        if let Some(f) = &self.frozen {
            out.push(("frozen".to_string(), trie_stats(&**f)?));
        }
        for (i, slot) in self.levels.iter().enumerate() {
            if let Some(l) = slot {
                out.push((format!("R{i}"), trie_stats(&*l.trie)?));
            }
        }
        Ok(out)
    }

    /// Every stored key, in no particular order.
    pub fn keys(&self) -> Result<Vec<CompositeKey>> {
        let mut out = self.mem.keys();
        if let Some(f) = &self.frozen {
            out.extend(f.keys());
        }
        for l in self.levels.iter().flatten() {
            for k in KeyIter::new(&*l.trie) {
                out.push(k?);
            }
        }
        Ok(out)
    }

    /// Waits for merges and saves the in-memory keys so the next
    /// [`open`](Self::open) sees them.
    pub fn close(mut self) -> Result<()> {
        if self.read_only {
            return Ok(());
        }
        let merged = self.wait_for_merge();
        let pending = self.dir.join(PENDING);
        let mut keys = self.mem.keys();
        if let Some(f) = &self.frozen {
            keys.extend(f.keys());
        }
        if keys.is_empty() {
            if pending.exists() {
                fs::remove_file(&pending).map_err(|e| Error::io("removing pending keys", &pending, e))?;
            }
        } else {
            let mut text = String::new();
            for k in keys {
                text += &format_record(&k);
                text.push('\n');
            }
            write_atomic(&self.dir, PENDING, text.as_bytes())?;
        }
        merged
    }
}

fn merge_into(
    dir: &Path,
    file: &str,
    bulk: BulkLoadConfig,
    mem: &MemTrie,
    tries: &[Arc<DiskTrie>],
) -> Result<BulkLoadReport> {
    let tmp = dir.join(format!("{file}.tmp"));
    let scratch = bulk.scratch_dir.clone();
    let result = (|| {
        let keys = KeyIter::new(mem).chain(tries.iter().flat_map(|t| KeyIter::new(&**t)));
        let mut w = FileWriter::create(&tmp)?;
        let report = BulkLoader::new(bulk)?.build_from(keys, &mut w)?;
        w.sync()?;
        Ok(report)
    })();
    let _ = fs::remove_dir_all(&scratch);
    match result {
        Ok(report) => {
            let dst = dir.join(file);
            fs::rename(&tmp, &dst).map_err(|e| Error::io("publishing trie file", &dst, e))?;
            sync_dir(dir)?;
            Ok(report)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    let dst = dir.join(name);
    let mut f = File::create(&tmp).map_err(|e| Error::io("creating file", &tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io("writing file", &tmp, e))?;
    fs::rename(&tmp, &dst).map_err(|e| Error::io("renaming file", &dst, e))?;
    sync_dir(dir)
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(|e| Error::io("syncing directory", dir, e))
}

type ManifestEntries = Vec<(usize, String, u64)>;

fn parse_manifest(text: &str, background: bool) -> Result<(LsmConfig, u64, ManifestEntries)> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Manifest("missing header".into()));
    }
    let bad = |line: &str| Error::Manifest(format!("malformed line {line:?}"));
    let num = |s: Option<&str>, line: &str| -> Result<u64> { s.and_then(|s| s.parse().ok()).ok_or_else(|| bad(line)) };
    let mut cfg = LsmConfig {
        background,
        ..LsmConfig::default()
    };
    let mut generation = 0;
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("tau") => cfg.tau = num(it.next(), line)? as usize,
            Some("memory_keys") => cfg.memory_keys = num(it.next(), line)? as usize,
            Some("value_length") => cfg.value_len = num(it.next(), line)? as usize,
            Some("page_size") => cfg.page_limit = PageLimit::Bytes(num(it.next(), line)? as usize),
            Some("page_keys") => cfg.page_limit = PageLimit::Keys(num(it.next(), line)? as usize),
            Some("generation") => generation = num(it.next(), line)?,
            Some("level") => {
                let level = num(it.next(), line)? as usize;
                let file = it.next().ok_or_else(|| bad(line))?.to_string();
                if file.contains('/') {
                    return Err(bad(line));
                }
                entries.push((level, file, num(it.next(), line)?));
            }
            _ => return Err(bad(line)),
        }
    }
    Ok((cfg, generation, entries))
}
