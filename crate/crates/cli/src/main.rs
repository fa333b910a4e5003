use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rscas::costmodel::{self, IoModelParams, Selectivity, TauInputs};
use rscas::keys::read_records;
use rscas::stats::TrieStats;
use rscas::{CasQuery, CompositeKey, Error, LsmConfig, LsmIndex, PageLimit};

/// Content-and-structure index over (path, value, ref) records.
#[derive(Parser, Debug)]
#[command(name = "rscas", version)]
struct Cli {
    /// Index directory.
    #[arg(long, short = 'd', env = "RSCAS_INDEX_DIR", global = true)]
    index_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Bulk-load a TSV file (path, value, ref) into a new index.
    Build {
        /// Input file, `-` for standard input.
        input: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Insert TSV records into an index, creating it if needed.
    Insert {
        input: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Merge on a background thread; fails with "index busy" when a
        /// merge would have to be waited for.
        #[arg(long)]
        background: bool,
    },
    /// Run `<path> <low> <high>` and print matching refs.
    Query {
        query: String,
        /// Print only the number of matches.
        #[arg(long)]
        count: bool,
    },
    /// Structure statistics for every trie of the index.
    Stats,
    /// Cost model reports.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Largest number of keys per leaf.
    #[arg(long, default_value_t = 100)]
    tau: usize,
    /// Keys held by the in-memory trie and by bulk-load memory partitions.
    #[arg(long, default_value_t = 10_000)]
    memory_keys: usize,
    #[arg(long, default_value_t = 16384)]
    page_size: usize,
    #[arg(long, default_value_t = 8)]
    value_length: usize,
    /// Directory for partition files; defaults to `scratch/` in the index.
    #[arg(long)]
    scratch: Option<PathBuf>,
}

impl ConfigArgs {
    fn lsm(&self) -> anyhow::Result<LsmConfig> {
        if self.tau == 0 || self.memory_keys == 0 || self.page_size == 0 || self.value_length == 0 {
            bail!("--tau, --memory-keys, --page-size and --value-length must be positive");
        }
        Ok(LsmConfig {
            memory_keys: self.memory_keys,
            tau: self.tau,
            value_len: self.value_length,
            page_limit: PageLimit::Bytes(self.page_size),
            background: false,
            scratch_dir: self.scratch.clone(),
        })
    }
}

#[derive(Subcommand, Debug)]
enum Analyze {
    /// Search cost of interleaving vectors for a query and its complement.
    Robustness {
        /// Fanout per trie level.
        #[arg(long, default_value_t = 10.0)]
        o: f64,
        /// Trie height.
        #[arg(long, default_value_t = 12)]
        h: usize,
        #[arg(long, default_value_t = 0.5)]
        path_selectivity: f64,
        #[arg(long, default_value_t = 0.1)]
        value_selectivity: f64,
    },
    /// Check the alternating vector against every equal-count vector on a
    /// selectivity grid.
    Theorems {
        #[arg(long, default_value_t = 10.0)]
        o: f64,
        #[arg(long, default_value_t = 12)]
        h: usize,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Page transfers of bulk-loading and inserting.
    Io {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        b: u64,
        #[arg(long, default_value_t = 256.0)]
        f: f64,
    },
    /// Estimates used to choose the leaf capacity.
    Tau {
        #[arg(long, default_value_t = 100.0)]
        tau: f64,
        /// Distinct prefixes, equally likely.
        #[arg(long)]
        prefixes: f64,
        #[arg(long, default_value_t = 400.0)]
        keys_per_page: f64,
        /// Metadata bytes per leaf.
        #[arg(long, default_value_t = 8.0)]
        d: f64,
        #[arg(long)]
        sigma_c: f64,
        /// Inverse fraction of the key stored as leaf suffix.
        #[arg(long, default_value_t = 2.0)]
        s: f64,
        /// Root-to-leaf path length at tau = 1.
        #[arg(long)]
        l: f64,
        /// Split factor per discriminative byte.
        #[arg(long, default_value_t = 10.0)]
        b: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let dir = || {
        cli.index_dir
            .clone()
            .context("no index directory; pass --index-dir or set RSCAS_INDEX_DIR")
    };
    match &cli.cmd {
        Cmd::Build { input, cfg } => build(&dir()?, input, cfg, &mut out)?,
        Cmd::Insert { input, cfg, background } => insert(&dir()?, input, cfg, *background, &mut out)?,
        Cmd::Query { query, count } => {
            let idx = LsmIndex::open_read_only(dir()?)?;
            let q = CasQuery::parse(query, idx.config().value_len)?;
            let refs = idx.query(&q)?;
            if *count {
                writeln!(out, "{}", refs.len())?;
            } else {
                for r in refs {
                    writeln!(out, "{}", r.to_hex())?;
                }
            }
        }
        Cmd::Stats => {
            let idx = LsmIndex::open_read_only(dir()?)?;
            let tau = idx.config().tau as u64;
            writeln!(out, "trie\tstat\tvalue")?;
            for (label, st) in idx.stats()? {
                write_stats(&mut out, &label, &st, tau)?;
            }
        }
        Cmd::Analyze { what } => analyze(what, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn read_input(input: &Path, value_len: usize) -> anyhow::Result<Vec<CompositeKey>> {
    let reader: Box<dyn BufRead> = if input == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
        Box::new(BufReader::new(f))
    };
    read_records(reader, value_len).with_context(|| format!("reading {}", input.display()))
}

fn build(dir: &Path, input: &Path, cfg: &ConfigArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let cfg = cfg.lsm()?;
    let keys = read_input(input, cfg.value_len)?;
    if keys.is_empty() {
        bail!("no keys in {}", input.display());
    }
    let (idx, r) = LsmIndex::build(dir, cfg, keys)?;
    let level = idx.levels().map(|(l, _)| l).next().unwrap_or(0);
    writeln!(out, "keys\t{}", r.key_count)?;
    writeln!(out, "nodes\t{}", r.node_count)?;
    writeln!(out, "bytes\t{}", r.bytes_written)?;
    writeln!(out, "level\t{level}")?;
    writeln!(out, "pages_read\t{}", r.io.pages_read)?;
    writeln!(out, "pages_written\t{}", r.io.pages_written)?;
    writeln!(out, "spilled_splits\t{}", r.spilled_splits)?;
    idx.close()?;
    Ok(())
}

fn insert(dir: &Path, input: &Path, cfg: &ConfigArgs, background: bool, out: &mut impl Write) -> anyhow::Result<()> {
    let mut idx = if dir.join(rscas::lsm::MANIFEST).exists() {
        let mut idx = LsmIndex::open(dir, background)?;
        idx.set_scratch_dir(cfg.scratch.clone());
        idx
    } else {
        LsmIndex::create(
            dir,
            LsmConfig {
                background,
                ..cfg.lsm()?
            },
        )?
    };
    let keys = read_input(input, idx.config().value_len)?;
    let mut inserted = 0;
    let mut failure = None;
    for k in &keys {
        match idx.insert(k) {
            Ok(()) => inserted += 1,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    idx.wait_for_merge()?;
    writeln!(out, "level\tkeys\tnodes\tbytes\tpages_read\tpages_written")?;
    for m in idx.merges() {
        writeln!(
            out,
            "R{}\t{}\t{}\t{}\t{}\t{}",
            m.level, m.keys, m.nodes, m.bytes, m.io.pages_read, m.io.pages_written
        )?;
    }
    writeln!(out, "inserted\t{inserted}")?;
    idx.close()?;
    match failure {
        None => Ok(()),
        Some(e @ Error::Busy) => Err(anyhow::Error::new(e).context(format!(
            "stopped after {inserted} of {} records; those are kept",
            keys.len()
        ))),
        Some(e) => Err(e.into()),
    }
}

fn write_stats(out: &mut impl Write, label: &str, st: &TrieStats, tau: u64) -> io::Result<()> {
    let mut row = |k: &str, v: String| writeln!(out, "{label}\t{k}\t{v}");
    row("keys", st.key_count.to_string())?;
    row("nodes", st.node_count.to_string())?;
    row("inner_nodes", st.inner_nodes.to_string())?;
    row("leaf_nodes", st.leaf_nodes.to_string())?;
    row("max_depth", st.max_depth.to_string())?;
    row("avg_leaf_depth", format!("{:.3}", st.avg_leaf_depth))?;
    row("avg_fanout", format!("{:.3}", st.avg_fanout))?;
    if let Some(d) = st.expected_depth(tau) {
        row("expected_depth", format!("{d:.3}"))?;
    }
    for (d, n) in &st.depth_histogram {
        row(&format!("depth.{d}"), n.to_string())?;
    }
    for (f, n) in &st.fanout_histogram {
        row(&format!("fanout.{f}"), n.to_string())?;
    }
    Ok(())
}

fn analyze(what: &Analyze, out: &mut impl Write) -> anyhow::Result<()> {
    match *what {
        Analyze::Robustness {
            o,
            h,
            path_selectivity,
            value_selectivity,
        } => {
            let q = Selectivity::new(path_selectivity, value_selectivity);
            let vectors = if h == 12 {
                costmodel::standard_vectors()
            } else {
                let pv = costmodel::concatenated(h);
                let vp = pv.iter().map(|d| d.flip()).collect();
                vec![
                    ("I_DY".to_string(), costmodel::alternating(h)),
                    ("I_PV".to_string(), pv),
                    ("I_VP".to_string(), vp),
                ]
            };
            writeln!(out, "vector\tphi\tcost_q\tcost_q_complement\tmean\tstddev")?;
            for r in costmodel::robustness_report(o, &vectors, &[q, q.complementary()]) {
                writeln!(
                    out,
                    "{}\t{}\t{:.0}\t{:.0}\t{:.0}\t{:.2}",
                    r.name,
                    costmodel::phi_string(&r.phi),
                    r.costs[0],
                    r.costs[1],
                    r.mean,
                    r.stddev
                )?;
            }
        }
        Analyze::Theorems { o, h, step } => {
            if h % 2 != 0 || !(step > 0.0 && step < 0.5) {
                bail!("h must be even and step in (0, 0.5)");
            }
            let grid = costmodel::selectivity_grid(step);
            let vectors = costmodel::equal_count_vectors(h).len();
            writeln!(out, "check\tvectors\tqueries\tcounterexamples\texample")?;
            let checks = [
                ("average", costmodel::check_average_optimality(o, h, &grid)),
                ("variability", costmodel::check_variability(o, h, &grid)),
                (
                    "variability_per_level",
                    costmodel::check_variability_per_level(o, h, &grid),
                ),
            ];
            for (name, found) in checks {
                let example = found.first().map_or("-".to_string(), |c| {
                    format!(
                        "{}@({:.2},{:.2}):{:.4}<{:.4}",
                        costmodel::phi_string(&c.phi),
                        c.query.path,
                        c.query.value,
                        c.other,
                        c.alternating
                    )
                });
                writeln!(
                    out,
                    "{name}\t{vectors}\t{}\t{}\t{example}",
                    grid.len() * grid.len(),
                    found.len()
                )?;
            }
        }
        Analyze::Io { n, m, b, f } => {
            if n == 0 || m == 0 || b == 0 || !(2.0..=256.0).contains(&f) {
                bail!("n, m and b must be positive and f in [2, 256]");
            }
            let p = IoModelParams { n, m, b, f };
            let uniform = costmodel::bulk_io_uniform(&p);
            let amortized = costmodel::amortized_insert_io(n, m, b, |n, m, b| {
                costmodel::bulk_io_uniform(&IoModelParams { n, m, b, f }) as f64
            });
            writeln!(out, "estimate\tpages")?;
            writeln!(out, "bulk_uniform\t{uniform}")?;
            writeln!(out, "bulk_skewed\t{}", costmodel::bulk_io_skewed(n, m, b))?;
            writeln!(out, "insert_amortized\t{amortized:.6}")?;
        }
        Analyze::Tau {
            tau,
            prefixes,
            keys_per_page,
            d,
            sigma_c,
            s,
            l,
            b,
        } => {
            if tau < 1.0 || prefixes < 1.0 || !(0.0..=1.0).contains(&sigma_c) || s < 1.0 || b < 2.0 {
                bail!("need tau >= 1, prefixes >= 1, sigma-c in [0, 1], s >= 1, b >= 2");
            }
            let r = costmodel::tau_estimators(&TauInputs {
                tau,
                n_prefixes: prefixes,
                keys_per_page,
                d,
                sigma_c,
                s,
                l,
                b,
            });
            writeln!(out, "estimate\tvalue")?;
            writeln!(out, "metadata_per_page\t{:.4}", r.metadata_per_page)?;
            writeln!(out, "expected_distinct_prefixes\t{:.4}", r.expected_distinct_prefixes)?;
            writeln!(out, "duplicate_prefix_overhead\t{:.4}", r.duplicate_prefix_overhead)?;
            writeln!(out, "visited_internal_nodes\t{:.4}", r.visited_internal_nodes)?;
            writeln!(out, "suffix_selectivity\t{:.4}", r.suffix_selectivity)?;
            writeln!(out, "irrelevant_keys\t{:.4}", r.irrelevant_keys)?;
        }
    }
    Ok(())
}
