//! Python bindings: `Index` (the on-disk index), `MemTrie`, the cost model
//! and the fixture keys.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rscas::bulkload::PageLimit;
use rscas::keys::{encode_value_len, terminate_path};
use rscas::stats::TrieStats;
use rscas::{costmodel, fixture, interleave, CasQuery, CompositeKey, Error, LsmConfig, LsmIndex, RefId};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidKey(_) | Error::QuerySyntax { .. } | Error::Record { .. } | Error::EmptyKeySet => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[derive(FromPyObject)]
enum PathArg {
    Bytes(Vec<u8>),
    Str(String),
}

impl PathArg {
    fn bytes(&self) -> &[u8] {
        match self {
            PathArg::Bytes(b) => b,
            PathArg::Str(s) => s.as_bytes(),
        }
    }
}

fn make_key(path: &PathArg, value: u64, reference: &str, value_len: usize) -> PyResult<CompositeKey> {
    let r = RefId::from_hex(reference).map_err(to_py)?;
    let p = terminate_path(path.bytes()).map_err(to_py)?;
    let v = encode_value_len(value, value_len).map_err(to_py)?;
    CompositeKey::new(p, v, r).map_err(to_py)
}

type StatRows = Vec<(String, f64)>;

fn stats_dict(st: &TrieStats, tau: u64) -> StatRows {
    let mut out = vec![
        ("keys".to_string(), st.key_count as f64),
        ("nodes".to_string(), st.node_count as f64),
        ("inner_nodes".to_string(), st.inner_nodes as f64),
        ("leaf_nodes".to_string(), st.leaf_nodes as f64),
        ("max_depth".to_string(), st.max_depth as f64),
        ("avg_leaf_depth".to_string(), st.avg_leaf_depth),
        ("avg_fanout".to_string(), st.avg_fanout),
    ];
    if let Some(d) = st.expected_depth(tau) {
        out.push(("expected_depth".to_string(), d));
    }
    out
}

/// Persistent index: an in-memory trie plus disk tries of doubling size.
#[pyclass(module = "rscas_py")]
struct Index {
    inner: Option<LsmIndex>,
}

impl Index {
    fn get(&self) -> PyResult<&LsmIndex> {
        self.inner
            .as_ref()
            .ok_or_else(|| PyRuntimeError::new_err("index is closed"))
    }

    fn get_mut(&mut self) -> PyResult<&mut LsmIndex> {
        self.inner
            .as_mut()
            .ok_or_else(|| PyRuntimeError::new_err("index is closed"))
    }
}

fn lsm_config(memory_keys: usize, tau: usize, page_size: usize, value_length: usize) -> LsmConfig {
    LsmConfig {
        memory_keys,
        tau,
        value_len: value_length,
        page_limit: PageLimit::Bytes(page_size),
        ..LsmConfig::default()
    }
}

#[pymethods]
impl Index {
    /// Creates an empty index in `directory`.
    #[staticmethod]
    #[pyo3(signature = (directory, memory_keys=10_000, tau=100, page_size=16384, value_length=8))]
    fn create(
        directory: PathBuf,
        memory_keys: usize,
        tau: usize,
        page_size: usize,
        value_length: usize,
    ) -> PyResult<Index> {
        let idx = LsmIndex::create(directory, lsm_config(memory_keys, tau, page_size, value_length)).map_err(to_py)?;
        Ok(Index { inner: Some(idx) })
    }

    /// Bulk-loads `(path, value, ref_hex)` records into a new index.
    #[staticmethod]
    #[pyo3(signature = (directory, records, memory_keys=10_000, tau=100, page_size=16384, value_length=8))]
    fn build(
        directory: PathBuf,
        records: Vec<(PathArg, u64, String)>,
        memory_keys: usize,
        tau: usize,
        page_size: usize,
        value_length: usize,
    ) -> PyResult<Index> {
        let keys = records
            .iter()
            .map(|(p, v, r)| make_key(p, *v, r, value_length))
            .collect::<PyResult<Vec<_>>>()?;
        let cfg = lsm_config(memory_keys, tau, page_size, value_length);
        let (idx, _) = LsmIndex::build(directory, cfg, keys).map_err(to_py)?;
        Ok(Index { inner: Some(idx) })
    }

    #[staticmethod]
    fn open(directory: PathBuf) -> PyResult<Index> {
        Ok(Index {
            inner: Some(LsmIndex::open(directory, false).map_err(to_py)?),
        })
    }

    fn insert(&mut self, path: PathArg, value: u64, reference: String) -> PyResult<()> {
        let idx = self.get_mut()?;
        let k = make_key(&path, value, &reference, idx.config().value_len)?;
        idx.insert(&k).map_err(to_py)
    }

    /// Refs (hex) of keys matching `"<path> <low> <high>"`.
    fn query(&self, query: &str) -> PyResult<Vec<String>> {
        let idx = self.get()?;
        let q = CasQuery::parse(query, idx.config().value_len).map_err(to_py)?;
        Ok(idx.query(&q).map_err(to_py)?.iter().map(RefId::to_hex).collect())
    }

    fn __len__(&self) -> PyResult<usize> {
        Ok(self.get()?.len() as usize)
    }

    /// Keys per disk slot.
    fn occupancy(&self) -> PyResult<Vec<u64>> {
        Ok(self.get()?.occupancy())
    }

    /// `(trie label, [(stat, value), ...])` per trie.
    fn stats(&self) -> PyResult<Vec<(String, StatRows)>> {
        let idx = self.get()?;
        let tau = idx.config().tau as u64;
        Ok(idx
            .stats()
            .map_err(to_py)?
            .iter()
            .map(|(l, st)| (l.clone(), stats_dict(st, tau)))
            .collect())
    }

    /// Persists in-memory keys; the object is unusable afterwards.
    fn close(&mut self) -> PyResult<()> {
        match self.inner.take() {
            Some(idx) => idx.close().map_err(to_py),
            None => Ok(()),
        }
    }
}

/// Unbounded in-memory trie.
#[pyclass(module = "rscas_py", name = "MemTrie")]
struct PyMemTrie {
    inner: rscas::MemTrie,
    value_len: usize,
}

#[pymethods]
impl PyMemTrie {
    #[new]
    #[pyo3(signature = (value_length=8))]
    fn new(value_length: usize) -> PyMemTrie {
        PyMemTrie {
            inner: rscas::MemTrie::unbounded(value_length),
            value_len: value_length,
        }
    }

    fn insert(&mut self, path: PathArg, value: u64, reference: String) -> PyResult<()> {
        let k = make_key(&path, value, &reference, self.value_len)?;
        self.inner.insert(&k).map_err(to_py)
    }

    fn query(&self, query: &str) -> PyResult<Vec<String>> {
        let q = CasQuery::parse(query, self.value_len).map_err(to_py)?;
        let refs = rscas::query::cas_query(&self.inner, &q).map_err(to_py)?;
        Ok(refs.iter().map(RefId::to_hex).collect())
    }

    fn stats(&self) -> PyResult<StatRows> {
        Ok(stats_dict(&rscas::stats::trie_stats(&self.inner).map_err(to_py)?, 1))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// The nine example keys as `(path, value, ref_hex, name)`.
#[pyfunction]
fn fixture_keys() -> Vec<(String, u64, String, String)> {
    fixture::sample_keys()
        .iter()
        .map(|k| {
            let raw = &k.path[..k.path.len() - 1];
            let v = u64::from_be_bytes(k.value.as_slice().try_into().expect("fixture values are 8 bytes"));
            let name = fixture::ref_name(&k.reference).unwrap_or("?").to_string();
            (String::from_utf8_lossy(raw).into_owned(), v, k.reference.to_hex(), name)
        })
        .collect()
}

/// Dynamic interleaving of each fixture key, rendered as tuples.
#[pyfunction]
#[pyo3(signature = (tau=2))]
fn fixture_interleavings(tau: usize) -> PyResult<Vec<String>> {
    let keys = fixture::sample_keys();
    let all = interleave::refs(&keys);
    keys.iter()
        .map(|k| {
            let i = interleave::dynamic_interleave(k, &all, tau).map_err(to_py)?;
            Ok(i.render(|r| fixture::ref_name(r).unwrap_or("?").to_string()))
        })
        .collect()
}

/// Summation-term search cost of interleaving vector `phi` ("VPVP...").
#[pyfunction]
fn search_cost(o: f64, phi: &str, path_selectivity: f64, value_selectivity: f64) -> PyResult<f64> {
    let phi = costmodel::parse_phi(phi).ok_or_else(|| PyValueError::new_err("phi must consist of P and V"))?;
    Ok(costmodel::search_cost_sum(
        o,
        &phi,
        costmodel::Selectivity::new(path_selectivity, value_selectivity),
    ))
}

/// `(name, phi, cost_q, cost_q_complement, mean, stddev)` for the standard
/// height-12 vectors.
#[pyfunction]
#[pyo3(signature = (o=10.0, path_selectivity=0.5, value_selectivity=0.1))]
fn robustness(o: f64, path_selectivity: f64, value_selectivity: f64) -> Vec<(String, String, f64, f64, f64, f64)> {
    let q = costmodel::Selectivity::new(path_selectivity, value_selectivity);
    costmodel::robustness_report(o, &costmodel::standard_vectors(), &[q, q.complementary()])
        .into_iter()
        .map(|r| {
            (
                r.name,
                costmodel::phi_string(&r.phi),
                r.costs[0],
                r.costs[1],
                r.mean,
                r.stddev,
            )
        })
        .collect()
}

#[pyfunction]
fn bulk_io_uniform(n: u64, m: u64, b: u64, f: f64) -> PyResult<u64> {
    if n == 0 || m == 0 || b == 0 || f <= 1.0 {
        return Err(PyValueError::new_err("n, m, b must be positive and f > 1"));
    }
    Ok(costmodel::bulk_io_uniform(&costmodel::IoModelParams { n, m, b, f }))
}

#[pyfunction]
fn bulk_io_skewed(n: u64, m: u64, b: u64) -> PyResult<u64> {
    if m == 0 || b == 0 {
        return Err(PyValueError::new_err("m and b must be positive"));
    }
    Ok(costmodel::bulk_io_skewed(n, m, b))
}

#[pyfunction]
fn expected_depth(fanout: f64, n: u64, tau: u64) -> f64 {
    rscas::stats::expected_depth(fanout, n, tau)
}

#[pymodule]
fn rscas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Index>()?;
    m.add_class::<PyMemTrie>()?;
    m.add_function(wrap_pyfunction!(fixture_keys, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_interleavings, m)?)?;
    m.add_function(wrap_pyfunction!(search_cost, m)?)?;
    m.add_function(wrap_pyfunction!(robustness, m)?)?;
    m.add_function(wrap_pyfunction!(bulk_io_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(bulk_io_skewed, m)?)?;
    m.add_function(wrap_pyfunction!(expected_depth, m)?)?;
    Ok(())
}
