//! Analytical cost model: search cost of an interleaving vector over a
//! complete search tree, robustness of vectors under complementary
//! queries, bulk-loading I/O estimates and leaf-threshold estimators.

use crate::keys::Dimension;

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    /// Fanout of the complete search tree.
    pub o: f64,
    /// Splitting dimension at each level; its length is the height.
    pub phi: Vec<Dimension>,
    pub sigma_p: f64,
    pub sigma_v: f64,
}

/// A query described only by its two selectivities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selectivity {
    pub path: f64,
    pub value: f64,
}

impl Selectivity {
    pub fn new(path: f64, value: f64) -> Selectivity {
        Selectivity { path, value }
    }

    pub fn complementary(self) -> Selectivity {
        Selectivity {
            path: self.value,
            value: self.path,
        }
    }
}

/// Expected nodes visited below the root: Σ over levels of Π (o·ς).
pub fn search_cost_sum(o: f64, phi: &[Dimension], q: Selectivity) -> f64 {
    let mut prod = 1.0;
    let mut total = 0.0;
    for d in phi {
        let s = match d {
            Dimension::Path => q.path,
            _ => q.value,
        };
        prod *= o * s;
        total += prod;
    }
    total
}

/// Expected nodes visited including the root.
pub fn search_cost(p: &CostParams) -> f64 {
    1.0 + search_cost_sum(p.o, &p.phi, Selectivity::new(p.sigma_p, p.sigma_v))
}

/// Parses a vector written as a string of `P` and `V`.
pub fn parse_phi(s: &str) -> Option<Vec<Dimension>> {
    s.chars()
        .map(|c| match c {
            'P' | 'p' => Some(Dimension::Path),
            'V' | 'v' => Some(Dimension::Value),
            _ => None,
        })
        .collect()
}

pub fn phi_string(phi: &[Dimension]) -> String {
    phi.iter().map(|d| d.to_string()).collect()
}

/// Perfectly alternating vector starting with a value level.
pub fn alternating(h: usize) -> Vec<Dimension> {
    (0..h)
        .map(|i| if i % 2 == 0 { Dimension::Value } else { Dimension::Path })
        .collect()
}

/// Path-then-value concatenation.
pub fn concatenated(h: usize) -> Vec<Dimension> {
    (0..h)
        .map(|i| if i < h / 2 { Dimension::Path } else { Dimension::Value })
        .collect()
}

/// Every vector of length `h` with exactly `h/2` path levels.
pub fn equal_count_vectors(h: usize) -> Vec<Vec<Dimension>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << h) {
        if mask.count_ones() as usize * 2 == h {
            out.push(
                (0..h)
                    .map(|i| {
                        if mask & (1 << i) != 0 {
                            Dimension::Path
                        } else {
                            Dimension::Value
                        }
                    })
                    .collect(),
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub name: String,
    pub phi: Vec<Dimension>,
    /// Summation-term cost per query, in input order.
    pub costs: Vec<f64>,
    pub mean: f64,
    /// Sample (n−1) standard deviation.
    pub stddev: f64,
}

pub fn robustness_report(o: f64, vectors: &[(String, Vec<Dimension>)], queries: &[Selectivity]) -> Vec<RobustnessRow> {
    vectors
        .iter()
        .map(|(name, phi)| {
            let costs: Vec<f64> = queries.iter().map(|&q| search_cost_sum(o, phi, q)).collect();
            let n = costs.len() as f64;
            let mean = costs.iter().sum::<f64>() / n;
            let stddev = if costs.len() > 1 {
                (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            RobustnessRow {
                name: name.clone(),
                phi: phi.clone(),
                costs,
                mean,
                stddev,
            }
        })
        .collect()
}

/// The five vectors of the standard comparison at height 12.
pub fn standard_vectors() -> Vec<(String, Vec<Dimension>)> {
    let pv = concatenated(12);
    let vp: Vec<_> = pv.iter().map(|d| d.flip()).collect();
    vec![
        ("I_DY".to_string(), alternating(12)),
        ("I_PV".to_string(), pv),
        ("I_VP".to_string(), vp),
        ("I_1".to_string(), parse_phi("VVVVPVPVPPPP").unwrap()),
        ("I_2".to_string(), parse_phi("VVVPPVPVVPPP").unwrap()),
    ]
}

/// Grid {step, 2·step, ...} up to `1 − step`, e.g. 0.05..0.95.
pub fn selectivity_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (1..n).map(|i| i as f64 * step).collect()
}

/// A vector and query for which a theorem check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub phi: Vec<Dimension>,
    pub query: Selectivity,
    pub alternating: f64,
    pub other: f64,
}

/// Relative slack, scaled by the magnitude of the compared costs.
const EPS: f64 = 1e-9;

// `measure` returns one (quantity, magnitude) pair per compared level.
fn check_all(
    h: usize,
    grid: &[f64],
    measure: impl Fn(&[Dimension], Selectivity) -> Vec<(f64, f64)>,
) -> Vec<Counterexample> {
    let dy = alternating(h);
    let mut bad = Vec::new();
    for &sp in grid {
        for &sv in grid {
            let q = Selectivity::new(sp, sv);
            let base = measure(&dy, q);
            for phi in equal_count_vectors(h) {
                let other = measure(&phi, q);
                let worse = base
                    .iter()
                    .zip(&other)
                    .find(|((b, sb), (o, so))| *b > *o + EPS * (sb + so));
                if let Some(((b, _), (o, _))) = worse {
                    bad.push(Counterexample {
                        phi,
                        query: q,
                        alternating: *b,
                        other: *o,
                    });
                }
            }
        }
    }
    bad
}

fn level_products(o: f64, phi: &[Dimension], q: Selectivity) -> Vec<f64> {
    let mut prod = 1.0;
    phi.iter()
        .map(|d| {
            prod *= o * if *d == Dimension::Path { q.path } else { q.value };
            prod
        })
        .collect()
}

/// Average optimality: the alternating vector minimises cost(Q) + cost(Q′).
pub fn check_average_optimality(o: f64, h: usize, grid: &[f64]) -> Vec<Counterexample> {
    check_all(h, grid, |phi, q| {
        let s = search_cost_sum(o, phi, q) + search_cost_sum(o, phi, q.complementary());
        vec![(s, s)]
    })
}

/// Variability: the alternating vector minimises |cost(Q) − cost(Q′)|.
pub fn check_variability(o: f64, h: usize, grid: &[f64]) -> Vec<Counterexample> {
    check_all(h, grid, |phi, q| {
        let (a, b) = (search_cost_sum(o, phi, q), search_cost_sum(o, phi, q.complementary()));
        vec![((a - b).abs(), a + b)]
    })
}

/// Level-wise variability: for every level l the alternating vector
/// minimises |Π_{i≤l} o·ς_{φ_i}(Q) − Π_{i≤l} o·ς_{φ_i}(Q′)|. A failing
/// pair reports its first offending level.
pub fn check_variability_per_level(o: f64, h: usize, grid: &[f64]) -> Vec<Counterexample> {
    check_all(h, grid, |phi, q| {
        let a = level_products(o, phi, q);
        let b = level_products(o, phi, q.complementary());
        a.iter().zip(&b).map(|(x, y)| ((x - y).abs(), x + y)).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoModelParams {
    /// Input keys.
    pub n: u64,
    /// Keys that fit in memory.
    pub m: u64,
    /// Keys per page.
    pub b: u64,
    /// Fanout of partitioning steps.
    pub f: f64,
}

/// Smallest k with f^k ≥ x.
pub fn ceil_log(f: f64, x: u64) -> u64 {
    assert!(f > 1.0, "fanout must exceed 1");
    let mut k = 0;
    let mut p = 1.0f64;
    while p * (1.0 + 1e-12) < x as f64 {
        p *= f;
        k += 1;
    }
    k
}

/// Page transfers to bulk-load uniformly distributed keys:
/// 2 · ⌈log_f ⌈N/M⌉⌉ · ⌈N/B⌉.
pub fn bulk_io_uniform(p: &IoModelParams) -> u64 {
    2 * ceil_log(p.f, p.n.div_ceil(p.m)) * p.n.div_ceil(p.b)
}

/// Page transfers to bulk-load maximally skewed keys, where every
/// partitioning step peels off a single key:
/// 2 · Σ_{i=1}^{N − ⌈M/B⌉·B} (⌈(N−i)/B⌉ + 1).
pub fn bulk_io_skewed(n: u64, m: u64, b: u64) -> u64 {
    let resident = m.div_ceil(b) * b;
    if n <= resident {
        return 0;
    }
    2 * (1..=n - resident).map(|i| (n - i).div_ceil(b) + 1).sum::<u64>()
}

/// Amortized page transfers per insertion into the LSM arrangement,
/// given the cost of bulk-loading `n` keys.
pub fn amortized_insert_io(n: u64, m: u64, b: u64, cost_fn: impl Fn(u64, u64, u64) -> f64) -> f64 {
    if n < m || n == 0 {
        return 0.0;
    }
    (n as f64 / m as f64).log2() * cost_fn(n, m, b) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauInputs {
    pub tau: f64,
    /// Number of equally likely distinct prefixes.
    pub n_prefixes: f64,
    /// Keys per disk page.
    pub keys_per_page: f64,
    /// Metadata bytes per leaf.
    pub d: f64,
    /// Selectivity of the whole query.
    pub sigma_c: f64,
    /// The leaf suffix is 1/s of the key length.
    pub s: f64,
    /// Path length at τ = 1.
    pub l: f64,
    /// Split factor per discriminative byte.
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauReport {
    pub metadata_per_page: f64,
    pub expected_distinct_prefixes: f64,
    pub duplicate_prefix_overhead: f64,
    pub visited_internal_nodes: f64,
    pub suffix_selectivity: f64,
    pub irrelevant_keys: f64,
}

pub fn tau_estimators(t: &TauInputs) -> TauReport {
    let n = t.n_prefixes;
    let ex = n * (1.0 - ((n - 1.0) / n).powf(t.tau));
    let sigma_s = t.sigma_c.powf(1.0 / t.s);
    TauReport {
        metadata_per_page: t.keys_per_page * t.d / t.tau,
        expected_distinct_prefixes: ex,
        duplicate_prefix_overhead: t.tau - ex,
        visited_internal_nodes: t.l - t.tau.ln() / t.b.ln(),
        suffix_selectivity: sigma_s,
        irrelevant_keys: (1.0 - sigma_s) * (t.tau - 1.0),
    }
}
