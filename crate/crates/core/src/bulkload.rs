//! External-memory construction of a disk trie.
//!
//! Keys flow through partitions: page lists that are either kept in
//! memory or spilled to scratch files. Each partition is split at its
//! discriminative byte into up to 256 child partitions in one streaming
//! pass, and the discriminative bytes of the children are computed during
//! that same pass by comparing every key with the first key routed to the
//! same child. Nodes are written depth-first in pre-order: a parent's
//! bytes are reserved before its children are written and filled in once
//! their offsets are known.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::disk_trie::{self, PREAMBLE_LEN};
use crate::error::{Error, Result};
use crate::keys::{common_prefix_len, CompositeKey, Dimension, RefId, REF_LEN};
use crate::trie::Suffix;

pub const DEFAULT_PAGE_SIZE: usize = 16 * 1024;

/// When an output page counts as full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageLimit {
    /// Byte capacity; a record never straddles two pages.
    Bytes(usize),
    /// Fixed number of keys per page.
    Keys(usize),
}

#[derive(Debug, Clone)]
pub struct BulkLoadConfig {
    /// Largest number of keys stored in one leaf.
    pub tau: usize,
    /// Keys that fit in memory. Children of a partition with at most this
    /// many keys stay in memory, others are spilled.
    pub memory_keys: u64,
    pub page_limit: PageLimit,
    pub scratch_dir: PathBuf,
    pub value_len: usize,
}

impl BulkLoadConfig {
    pub fn new(scratch_dir: impl Into<PathBuf>) -> BulkLoadConfig {
        BulkLoadConfig {
            tau: 100,
            memory_keys: 1_000_000,
            page_limit: PageLimit::Bytes(DEFAULT_PAGE_SIZE),
            scratch_dir: scratch_dir.into(),
            value_len: crate::keys::DEFAULT_VALUE_LEN,
        }
    }
}

/// Page transfers to and from scratch files. Reading the input and writing
/// the finished trie are not counted.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IoCounters {
    pub pages_read: u64,
    pub pages_written: u64,
}

impl IoCounters {
    pub fn total(&self) -> u64 {
        self.pages_read + self.pages_written
    }
}

impl std::ops::AddAssign for IoCounters {
    fn add_assign(&mut self, o: IoCounters) {
        self.pages_read += o.pages_read;
        self.pages_written += o.pages_written;
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct BulkLoadReport {
    pub key_count: u64,
    pub node_count: u64,
    /// Size of the trie image including the preamble.
    pub bytes_written: u64,
    pub io: IoCounters,
    /// Splits whose children were spilled, and the children they produced.
    pub spilled_splits: u64,
    pub spilled_children: u64,
    /// Average encoded size of an input record.
    pub avg_record_bytes: f64,
    /// Largest number of records held in memory pages at once.
    pub peak_resident_records: u64,
}

impl BulkLoadReport {
    /// Average fanout over spilled splits, 0 when nothing was spilled.
    pub fn spilled_fanout(&self) -> f64 {
        if self.spilled_splits == 0 {
            0.0
        } else {
            self.spilled_children as f64 / self.spilled_splits as f64
        }
    }
}

#[derive(Debug, Default)]
struct Page {
    bytes: Vec<u8>,
    keys: u32,
}

fn record_len(r: &Suffix) -> usize {
    2 + r.path.len() + r.value.len() + REF_LEN
}

#[derive(Debug)]
enum Storage {
    Memory(Vec<Page>),
    Disk { path: PathBuf, pages: u64, counted: bool },
}

/// A set of stripped keys with its discriminative bytes. Positions are
/// 1-based relative to the stored remainders.
#[derive(Debug)]
pub struct Partition {
    g_p: usize,
    g_v: usize,
    size: u64,
    sample: Suffix,
    storage: Storage,
}

impl Partition {
    pub fn g_p(&self) -> usize {
        self.g_p
    }

    pub fn g_v(&self) -> usize {
        self.g_v
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn is_on_disk(&self) -> bool {
        matches!(self.storage, Storage::Disk { .. })
    }

    fn splits(&self, dim: Dimension) -> bool {
        match dim {
            Dimension::Path => self.g_p <= self.sample.path.len(),
            Dimension::Value => self.g_v <= self.sample.value.len(),
            Dimension::Bottom => false,
        }
    }
}

enum Sink {
    Memory(Vec<Page>),
    Disk {
        path: PathBuf,
        file: BufWriter<File>,
        pages: u64,
        counted: bool,
    },
    // Memory until more than `limit` keys arrive, then an uncounted file.
    Auto {
        pages: Vec<Page>,
        limit: u64,
        path: PathBuf,
    },
}

struct Builder {
    g_p: usize,
    g_v: usize,
    size: u64,
    sample: Option<Suffix>,
    page: Page,
    sink: Sink,
}

#[derive(Debug, Default)]
struct Tally {
    io: IoCounters,
    resident: u64,
    peak_resident: u64,
}

impl Tally {
    fn add_resident(&mut self, n: u64) {
        self.resident += n;
        self.peak_resident = self.peak_resident.max(self.resident);
    }
}

fn write_block(file: &mut BufWriter<File>, path: &Path, page: &Page) -> Result<()> {
    let mut head = [0u8; 8];
    head[..4].copy_from_slice(&(page.bytes.len() as u32).to_le_bytes());
    head[4..].copy_from_slice(&page.keys.to_le_bytes());
    file.write_all(&head)
        .and_then(|_| file.write_all(&page.bytes))
        .map_err(|e| Error::io("writing partition page", path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io("creating partition file", path, e))
}

impl Builder {
    fn new(sink: Sink) -> Builder {
        Builder {
            g_p: 0,
            g_v: 0,
            size: 0,
            sample: None,
            page: Page::default(),
            sink,
        }
    }

    fn page_full(&self, limit: PageLimit, next: usize) -> bool {
        if self.page.keys == 0 {
            return false;
        }
        match limit {
            PageLimit::Bytes(b) => self.page.bytes.len() + next > b,
            PageLimit::Keys(k) => self.page.keys as usize >= k,
        }
    }

    fn add(&mut self, r: &Suffix, limit: PageLimit, tally: &mut Tally) -> Result<()> {
        match &self.sample {
            None => {
                self.g_p = r.path.len() + 1;
                self.g_v = r.value.len() + 1;
                self.sample = Some(r.clone());
            }
            Some(s) => {
                self.g_p = 1 + common_prefix_len(&r.path[..(self.g_p - 1).min(r.path.len())], &s.path);
                self.g_v = 1 + common_prefix_len(&r.value[..(self.g_v - 1).min(r.value.len())], &s.value);
            }
        }
        if self.page_full(limit, record_len(r)) {
            self.flush(tally)?;
        }
        disk_trie::push_suffix(r, &mut self.page.bytes)?;
        self.page.keys += 1;
        self.size += 1;
        tally.add_resident(1);
        Ok(())
    }

    fn flush(&mut self, tally: &mut Tally) -> Result<()> {
        if self.page.keys == 0 {
            return Ok(());
        }
        let page = std::mem::take(&mut self.page);
        match &mut self.sink {
            Sink::Memory(pages) => pages.push(page),
            Sink::Disk {
                path,
                file,
                pages,
                counted,
            } => {
                write_block(file, path, &page)?;
                *pages += 1;
                tally.resident -= page.keys as u64;
                if *counted {
                    tally.io.pages_written += 1;
                }
            }
            Sink::Auto { pages, limit, path } => {
                pages.push(page);
                if self.size > *limit {
                    let mut file = create(path)?;
                    let mut n = 0;
                    for p in pages.drain(..) {
                        write_block(&mut file, path, &p)?;
                        tally.resident -= p.keys as u64;
                        n += 1;
                    }
                    self.sink = Sink::Disk {
                        path: path.clone(),
                        file,
                        pages: n,
                        counted: false,
                    };
                }
            }
        }
        Ok(())
    }

    fn finish(mut self, tally: &mut Tally) -> Result<Partition> {
        self.flush(tally)?;
        let storage = match self.sink {
            Sink::Memory(pages) | Sink::Auto { pages, .. } => Storage::Memory(pages),
            Sink::Disk {
                path,
                mut file,
                pages,
                counted,
            } => {
                file.flush()
                    .map_err(|e| Error::io("flushing partition file", &path, e))?;
                Storage::Disk { path, pages, counted }
            }
        };
        Ok(Partition {
            g_p: self.g_p,
            g_v: self.g_v,
            size: self.size,
            sample: self.sample.ok_or(Error::EmptyKeySet)?,
            storage,
        })
    }
}

fn decode_records(bytes: &[u8], mut f: impl FnMut(Suffix) -> Result<()>) -> Result<()> {
    let mut pos = 0;
    while pos < bytes.len() {
        let bad = || Error::format(pos as u64, "truncated partition record");
        let lp = *bytes.get(pos).ok_or_else(bad)? as usize;
        let lv = *bytes.get(pos + 1).ok_or_else(bad)? as usize;
        let end = pos + 2 + lp + lv + REF_LEN;
        let rec = bytes.get(pos + 2..end).ok_or_else(bad)?;
        f(Suffix {
            path: rec[..lp].to_vec(),
            value: rec[lp..lp + lv].to_vec(),
            reference: RefId(rec[lp + lv..].try_into().expect("20 bytes")),
        })?;
        pos = end;
    }
    Ok(())
}

/// Random-access sink for the trie image.
pub trait NodeWriter {
    fn write_at(&mut self, pos: u64, bytes: &[u8]) -> Result<()>;
}

impl NodeWriter for Vec<u8> {
    fn write_at(&mut self, pos: u64, bytes: &[u8]) -> Result<()> {
        let end = pos as usize + bytes.len();
        if self.len() < end {
            self.resize(end, 0);
        }
        self[pos as usize..end].copy_from_slice(bytes);
        Ok(())
    }
}

pub struct FileWriter {
    file: File,
    path: PathBuf,
}

impl FileWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<FileWriter> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io("creating trie file", &path, e))?;
        Ok(FileWriter { file, path })
    }

    pub fn sync(&self) -> Result<()> {
        self.file
            .sync_all()
            .map_err(|e| Error::io("syncing trie file", &self.path, e))
    }
}

impl NodeWriter for FileWriter {
    fn write_at(&mut self, pos: u64, bytes: &[u8]) -> Result<()> {
        self.file
            .write_all_at(bytes, pos)
            .map_err(|e| Error::io("writing trie node", &self.path, e))
    }
}

/// Runs one construction job. Holds the configuration and the counters.
pub struct BulkLoader {
    cfg: BulkLoadConfig,
    tally: Tally,
    seq: u64,
    nodes: u64,
    spilled_splits: u64,
    spilled_children: u64,
    input_bytes: u64,
}

impl BulkLoader {
    pub fn new(cfg: BulkLoadConfig) -> Result<BulkLoader> {
        if cfg.tau == 0 {
            return Err(Error::InvalidKey("tau must be at least 1".into()));
        }
        match cfg.page_limit {
            PageLimit::Bytes(0) | PageLimit::Keys(0) => {
                return Err(Error::InvalidKey("page limit must be positive".into()))
            }
            _ => {}
        }
        fs::create_dir_all(&cfg.scratch_dir)
            .map_err(|e| Error::io("creating scratch directory", &cfg.scratch_dir, e))?;
        Ok(BulkLoader {
            cfg,
            tally: Tally::default(),
            seq: 0,
            nodes: 0,
            spilled_splits: 0,
            spilled_children: 0,
            input_bytes: 0,
        })
    }

    pub fn io_counters(&self) -> IoCounters {
        self.tally.io
    }

    pub fn config(&self) -> &BulkLoadConfig {
        &self.cfg
    }

    fn scratch_file(&mut self, depth: usize) -> PathBuf {
        self.seq += 1;
        self.cfg.scratch_dir.join(format!("d{depth}-{}.part", self.seq))
    }

    /// Collects the input into the root partition and computes its
    /// discriminative bytes in the same pass.
    pub fn make_root_partition<I>(&mut self, keys: I) -> Result<Partition>
    where
        I: IntoIterator<Item = CompositeKey>,
    {
        self.make_root_partition_from(keys.into_iter().map(Ok))
    }

    /// Like [`make_root_partition`](Self::make_root_partition) for key
    /// sources that can fail, such as other tries being merged.
    pub fn make_root_partition_from<I>(&mut self, keys: I) -> Result<Partition>
    where
        I: IntoIterator<Item = Result<CompositeKey>>,
    {
        let path = self.scratch_file(0);
        let mut b = Builder::new(Sink::Auto {
            pages: Vec::new(),
            limit: self.cfg.memory_keys,
            path,
        });
        for k in keys {
            let k = k?;
            if k.value.len() != self.cfg.value_len {
                return Err(Error::InvalidKey(format!(
                    "value has {} bytes, the index uses {}",
                    k.value.len(),
                    self.cfg.value_len
                )));
            }
            let r = Suffix {
                path: k.path,
                value: k.value,
                reference: k.reference,
            };
            self.input_bytes += record_len(&r) as u64;
            b.add(&r, self.cfg.page_limit, &mut self.tally)?;
        }
        if b.size == 0 {
            return Err(Error::EmptyKeySet);
        }
        b.finish(&mut self.tally)
    }

    fn create_sink(&mut self, in_memory: bool, depth: usize) -> Result<Sink> {
        if in_memory {
            return Ok(Sink::Memory(Vec::new()));
        }
        let path = self.scratch_file(depth);
        Ok(Sink::Disk {
            file: create(&path)?,
            path,
            pages: 0,
            counted: true,
        })
    }

    /// Consumes a partition and returns its records.
    pub fn read_partition(&mut self, l: Partition) -> Result<Vec<Suffix>> {
        let mut out = Vec::with_capacity(l.size as usize);
        let mut rd = PageReader::open(l.storage)?;
        while let Some(page) = rd.next_page(&mut self.tally)? {
            decode_records(&page, |r| {
                out.push(r);
                Ok(())
            })?;
        }
        rd.finish()?;
        Ok(out)
    }

    /// Splits `l` at its discriminative byte in `dim`, returning the child
    /// partitions in ascending byte order. Every routed key is stripped of
    /// `l`'s common prefixes in both dimensions, so the discriminative byte
    /// becomes the first byte of its `dim` slice.
    pub fn psi_stream(&mut self, l: Partition, dim: Dimension, depth: usize) -> Result<Vec<(u8, Partition)>> {
        if !l.splits(dim) {
            return Err(Error::InvalidKey(format!("partition cannot split in dimension {dim}")));
        }
        let in_memory = l.size <= self.cfg.memory_keys;
        let (gp, gv) = (l.g_p - 1, l.g_v - 1);
        let limit = self.cfg.page_limit;
        let mut table: Vec<Option<Builder>> = (0..256).map(|_| None).collect();
        let mut rd = PageReader::open(l.storage)?;
        while let Some(page) = rd.next_page(&mut self.tally)? {
            decode_records(&page, |mut r| {
                let b = match dim {
                    Dimension::Path => r.path.get(gp),
                    _ => r.value.get(gv),
                }
                .copied();
                let Some(b) = b.filter(|_| r.path.len() >= gp && r.value.len() >= gv) else {
                    return Err(Error::InvalidKey("partition is not prefix-free".into()));
                };
                r.path.drain(..gp);
                r.value.drain(..gv);
                if table[b as usize].is_none() {
                    table[b as usize] = Some(Builder::new(self.create_sink(in_memory, depth + 1)?));
                }
                table[b as usize]
                    .as_mut()
                    .expect("slot filled above")
                    .add(&r, limit, &mut self.tally)
            })?;
        }
        rd.finish()?;
        let mut out = Vec::new();
        for (b, slot) in table.into_iter().enumerate() {
            if let Some(builder) = slot {
                out.push((b as u8, builder.finish(&mut self.tally)?));
            }
        }
        if !in_memory {
            self.spilled_splits += 1;
            self.spilled_children += out.len() as u64;
        }
        Ok(out)
    }

    /// Writes the subtree for `l` starting at `pos` and returns the first
    /// offset after it.
    pub fn bulk_load<W: NodeWriter>(
        &mut self,
        l: Partition,
        dim: Dimension,
        pos: u64,
        depth: usize,
        out: &mut W,
    ) -> Result<u64> {
        self.nodes += 1;
        let path = l.sample.path[..l.g_p - 1].to_vec();
        let value = l.sample.value[..l.g_v - 1].to_vec();
        let can_p = l.splits(Dimension::Path);
        let can_v = l.splits(Dimension::Value);
        if l.size > self.cfg.tau as u64 && (can_p || can_v) {
            let d = match dim {
                Dimension::Path if !can_p => Dimension::Value,
                Dimension::Value if !can_v => Dimension::Path,
                d => d,
            };
            let table = self.psi_stream(l, d, depth)?;
            let mut next = pos + disk_trie::inner_size(path.len(), value.len(), table.len());
            let mut offsets = Vec::with_capacity(table.len());
            for (b, child) in table {
                offsets.push((b, next));
                next = self.bulk_load(child, d.flip(), next, depth + 1, out)?;
            }
            out.write_at(pos, &disk_trie::encode_inner(d, &path, &value, &offsets)?)?;
            Ok(next)
        } else {
            let (gp, gv) = (l.g_p - 1, l.g_v - 1);
            let mut suffixes = self.read_partition(l)?;
            for s in &mut suffixes {
                s.path.drain(..gp);
                s.value.drain(..gv);
            }
            let image = disk_trie::encode_leaf(&path, &value, suffixes.iter())?;
            out.write_at(pos, &image)?;
            Ok(pos + image.len() as u64)
        }
    }

    /// Builds a complete trie image (preamble included) into `out`.
    pub fn build<I, W>(self, keys: I, out: &mut W) -> Result<BulkLoadReport>
    where
        I: IntoIterator<Item = CompositeKey>,
        W: NodeWriter,
    {
        self.build_from(keys.into_iter().map(Ok), out)
    }

    pub fn build_from<I, W>(mut self, keys: I, out: &mut W) -> Result<BulkLoadReport>
    where
        I: IntoIterator<Item = Result<CompositeKey>>,
        W: NodeWriter,
    {
        let root = self.make_root_partition_from(keys)?;
        let key_count = root.size;
        let end = self.bulk_load(root, Dimension::Value, PREAMBLE_LEN, 0, out)?;
        out.write_at(
            0,
            &disk_trie::encode_preamble(self.cfg.value_len, key_count, PREAMBLE_LEN)?,
        )?;
        Ok(BulkLoadReport {
            key_count,
            node_count: self.nodes,
            bytes_written: end,
            io: self.tally.io,
            spilled_splits: self.spilled_splits,
            spilled_children: self.spilled_children,
            avg_record_bytes: self.input_bytes as f64 / key_count as f64,
            peak_resident_records: self.tally.peak_resident,
        })
    }
}

/// Sequential page access to a partition; deletes its file when done.
struct PageReader {
    pages: std::vec::IntoIter<Page>,
    disk: Option<(BufReader<File>, PathBuf, u64, bool)>,
}

impl PageReader {
    fn open(storage: Storage) -> Result<PageReader> {
        Ok(match storage {
            Storage::Memory(pages) => PageReader {
                pages: pages.into_iter(),
                disk: None,
            },
            Storage::Disk { path, pages, counted } => {
                let f = File::open(&path).map_err(|e| Error::io("opening partition file", &path, e))?;
                PageReader {
                    pages: Vec::new().into_iter(),
                    disk: Some((BufReader::new(f), path, pages, counted)),
                }
            }
        })
    }

    fn next_page(&mut self, tally: &mut Tally) -> Result<Option<Vec<u8>>> {
        match &mut self.disk {
            None => Ok(self.pages.next().map(|p| {
                tally.resident -= p.keys as u64;
                p.bytes
            })),
            Some((_, _, 0, _)) => Ok(None),
            Some((rd, path, left, counted)) => {
                let mut head = [0u8; 8];
                rd.read_exact(&mut head)
                    .map_err(|e| Error::io("reading partition page", &*path, e))?;
                let n = u32::from_le_bytes(head[..4].try_into().expect("4 bytes")) as usize;
                let mut buf = vec![0u8; n];
                rd.read_exact(&mut buf)
                    .map_err(|e| Error::io("reading partition page", &*path, e))?;
                *left -= 1;
                if *counted {
                    tally.io.pages_read += 1;
                }
                Ok(Some(buf))
            }
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((rd, path, _, _)) = self.disk {
            drop(rd);
            fs::remove_file(&path).map_err(|e| Error::io("deleting partition file", &path, e))?;
        }
        Ok(())
    }
}

/// Bulk-loads `keys` into the trie file at `path`.
pub fn build_file<I>(keys: I, cfg: BulkLoadConfig, path: &Path) -> Result<BulkLoadReport>
where
    I: IntoIterator<Item = CompositeKey>,
{
    let mut w = FileWriter::create(path)?;
    let report = BulkLoader::new(cfg)?.build(keys, &mut w)?;
    w.sync()?;
    Ok(report)
}

/// Bulk-loads `keys` entirely in memory and returns the trie image.
pub fn build_image(keys: &[CompositeKey], tau: usize, scratch: &Path) -> Result<Vec<u8>> {
    let value_len = keys.first().map_or(crate::keys::DEFAULT_VALUE_LEN, |k| k.value.len());
    let cfg = BulkLoadConfig {
        tau,
        memory_keys: u64::MAX,
        page_limit: PageLimit::Bytes(DEFAULT_PAGE_SIZE),
        scratch_dir: scratch.to_path_buf(),
        value_len,
    };
    let mut out = Vec::new();
    BulkLoader::new(cfg)?.build(keys.iter().cloned(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disk_trie::DiskTrie;
    use crate::{fixture, interleave, trie};

    fn cfg(dir: &Path, tau: usize, m: u64, limit: PageLimit) -> BulkLoadConfig {
        BulkLoadConfig {
            tau,
            memory_keys: m,
            page_limit: limit,
            scratch_dir: dir.to_path_buf(),
            value_len: 8,
        }
    }

    fn triple(l: &Partition) -> (usize, usize, u64) {
        (l.g_p(), l.g_v(), l.size())
    }

    #[test]
    fn fixture_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let mut bl = BulkLoader::new(cfg(dir.path(), 2, 100, PageLimit::Bytes(DEFAULT_PAGE_SIZE))).unwrap();
        let root = bl.make_root_partition(fixture::sample_keys()).unwrap();
        assert_eq!(triple(&root), (2, 5, 9));
        let t = bl.psi_stream(root, Dimension::Value, 0).unwrap();
        let got: Vec<_> = t.iter().map(|(b, l)| (*b, triple(l))).collect();
        assert_eq!(got, [(0x5D, (9, 3, 4)), (0x5E, (7, 2, 2)), (0x5F, (1, 3, 3))]);
        let (_, l1489) = t.into_iter().next().unwrap();
        let t = bl.psi_stream(l1489, Dimension::Path, 1).unwrap();
        let got: Vec<_> = t.iter().map(|(b, l)| (*b, triple(l))).collect();
        assert_eq!(got, [(b'M', (8, 3, 1)), (b'S', (5, 1, 3))]);
        assert_eq!(bl.io_counters(), IoCounters::default());
    }

    #[test]
    fn fixture_trie_matches_reference() {
        let dir = tempfile::tempdir().unwrap();
        let keys = fixture::sample_keys();
        for tau in [1, 2, 3, 9, 100] {
            let img = build_image(&keys, tau, dir.path()).unwrap();
            let t = DiskTrie::from_bytes(img).unwrap();
            let got = trie::to_tree(&t).unwrap().unwrap();
            let want = interleave::reference_trie(&keys, tau).unwrap().unwrap();
            assert_eq!(got, want, "tau {tau}");
        }
    }

    #[test]
    fn single_key_is_one_leaf() {
        let dir = tempfile::tempdir().unwrap();
        let k = fixture::sample_keys().remove(3);
        let img = build_image(std::slice::from_ref(&k), 1, dir.path()).unwrap();
        let t = DiskTrie::from_bytes(img).unwrap();
        let nodes = t.scan().unwrap();
        assert_eq!(nodes.len(), 1);
        let root = t.read_node(PREAMBLE_LEN).unwrap().view;
        assert_eq!(root.dim, Dimension::Bottom);
        assert_eq!(root.path, k.path);
        assert_eq!(root.suffixes.len(), 1);
    }

    #[test]
    fn empty_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bl = BulkLoader::new(cfg(dir.path(), 1, 10, PageLimit::Keys(2))).unwrap();
        assert!(matches!(bl.make_root_partition(Vec::new()), Err(Error::EmptyKeySet)));
    }

    fn uniform16() -> Vec<CompositeKey> {
        (0..16u8)
            .map(|i| {
                let bit = |n: u8| (i >> n) & 1;
                let mut value = vec![0u8; 8];
                value[0] = bit(3);
                value[1] = bit(1);
                let path = format!("/{}{}", (b'a' + bit(2)) as char, (b'a' + bit(0)) as char);
                CompositeKey::new(
                    crate::keys::terminate_path(path.as_bytes()).unwrap(),
                    value,
                    RefId([i; 20]),
                )
                .unwrap()
            })
            .collect()
    }

    fn skewed16() -> Vec<CompositeKey> {
        (0..16)
            .map(|i| {
                let path = format!("/{}b", "a".repeat(i));
                CompositeKey::from_parts(path.as_bytes(), 42, RefId([i as u8; 20])).unwrap()
            })
            .collect()
    }

    fn io_for(keys: Vec<CompositeKey>) -> BulkLoadReport {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let report = BulkLoader::new(cfg(dir.path(), 1, 4, PageLimit::Keys(2)))
            .unwrap()
            .build(keys.clone(), &mut out)
            .unwrap();
        let mut got = trie::collect_keys(&DiskTrie::from_bytes(out).unwrap()).unwrap();
        let mut want = keys;
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0, "scratch files left");
        report
    }

    #[test]
    fn uniform_example_io() {
        let r = io_for(uniform16());
        assert_eq!(r.io.total(), 32);
        assert_eq!(r.io.pages_read, r.io.pages_written);
        assert_eq!(r.spilled_fanout(), 2.0);
    }

    #[test]
    fn skewed_example_io() {
        assert_eq!(io_for(skewed16()).io.total(), 144);
    }

    #[test]
    fn in_memory_build_has_no_io() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let r = BulkLoader::new(cfg(dir.path(), 1, 16, PageLimit::Keys(2)))
            .unwrap()
            .build(uniform16(), &mut out)
            .unwrap();
        assert_eq!(r.io, IoCounters::default());
        assert_eq!(r.key_count, 16);
        assert_eq!(r.bytes_written, out.len() as u64);
    }

    #[test]
    fn memory_bound_holds() {
        let dir = tempfile::tempdir().unwrap();
        let keys: Vec<CompositeKey> = (0..2000u64)
            .map(|i| {
                let path = format!("/d{}/f{}", i % 37, i * 7 % 101);
                CompositeKey::from_parts(path.as_bytes(), i * 2654435761 % 100000, RefId::default()).unwrap()
            })
            .collect();
        let mut out = Vec::new();
        let (m, b) = (50u64, 4u64);
        let r = BulkLoader::new(cfg(dir.path(), 3, m, PageLimit::Keys(b as usize)))
            .unwrap()
            .build(keys, &mut out)
            .unwrap();
        assert!(r.io.total() > 0);
        assert!(
            r.peak_resident_records <= m + 256 * b + b,
            "peak {}",
            r.peak_resident_records
        );
    }
}
