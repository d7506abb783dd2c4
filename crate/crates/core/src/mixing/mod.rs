//! Observational learning: every client's next strategy is a non-negative
//! linear combination of everybody's current probabilities, rescaled per
//! client back onto the simplex.
//!
//! Strategies are flattened client-major: index `i * N + j` holds `p_ij`.
//! A [`WeightMatrix`] `W` is `N^2 x N^2` and row `(i, j)` holds the weights
//! `w^{ij}_{kl}` that client `i` puts on `p_kl` when forming its new `p_ij`.

mod certify;
mod graph;
mod io;

use serde::{Deserialize, Serialize};

pub use certify::{
    certify_uniform_consensus, empirical_verdict, ComponentReport, ConsensusReport, Verdict,
};
pub use graph::{is_aperiodic, period, strongly_connected_closed_groups, Component};
pub use io::{format_weight_matrix, parse_strategy_vector, parse_weight_matrix};

use crate::error::{Error, Result};
use crate::model::StrategyMatrix;
use crate::rng::RngStream;

/// Tolerance for row-sum and block-sum checks.
pub const MIXING_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// All clients' strategies as one vector of length `N^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatStrategyVector {
    n: usize,
    entries: Vec<f64>,
}

impl FlatStrategyVector {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        for (i, block) in entries.chunks_exact(n).enumerate() {
            crate::model::validate_row(i, block)?;
        }
        Ok(Self { n, entries })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        Ok(Self {
            n,
            entries: vec![1.0 / n as f64; n * n],
        })
    }

    pub fn from_matrix(m: &StrategyMatrix) -> Self {
        Self {
            n: m.n(),
            entries: m.rows().flatten().copied().collect(),
        }
    }

    /// Each client block drawn uniformly from the simplex.
    pub fn random(n: usize, rng: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n {
            // Normalized exponentials are uniform on the simplex.
            let block: Vec<f64> = (0..n).map(|_| -(1.0 - rng.unit()).ln()).collect();
            let s: f64 = block.iter().sum();
            entries.extend(block.iter().map(|x| x / s));
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn block(&self, client: usize) -> &[f64] {
        &self.entries[client * self.n..(client + 1) * self.n]
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn linf_distance(&self, other: &[f64]) -> f64 {
        linf(&self.entries, other)
    }

    /// Largest distance of any entry from `1/N`.
    pub fn distance_from_uniform(&self) -> f64 {
        let u = 1.0 / self.n as f64;
        self.entries.iter().map(|p| (p - u).abs()).fold(0.0, f64::max)
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Output of the linear stage; not necessarily a probability object.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVector {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl RawVector {
    pub fn block_sum(&self, client: usize) -> f64 {
        self.entries[client * self.n..(client + 1) * self.n].iter().sum()
    }
}

/// Sparse non-negative `N^2 x N^2` matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl WeightMatrix {
    /// Builds `W` from `(row, col, value)` triples over flattened indices.
    /// Duplicate positions are summed; zero entries are dropped.
    pub fn from_triples(
        n: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        let dim = n * n;
        let mut items: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triples {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.max(c) + 1,
                });
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param("w", v, format!("entry ({r}, {c}) must be non-negative")));
            }
            items.push((r, c, v));
        }
        items.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_start = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(items.len());
        let mut vals: Vec<f64> = Vec::with_capacity(items.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in items {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            vals.push(v);
            row_start[r + 1] += 1;
        }
        for r in 0..dim {
            row_start[r + 1] += row_start[r];
        }
        let mut w = Self {
            n,
            row_start,
            cols,
            vals,
        };
        w.drop_zeros();
        Ok(w)
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v > 0.0) {
            return;
        }
        let triples: Vec<_> = self.triples().filter(|t| t.2 > 0.0).collect();
        let dim = self.dim();
        let mut row_start = vec![0; dim + 1];
        for &(r, _, _) in &triples {
            row_start[r + 1] += 1;
        }
        for r in 0..dim {
            row_start[r + 1] += row_start[r];
        }
        self.cols = triples.iter().map(|t| t.1).collect();
        self.vals = triples.iter().map(|t| t.2).collect();
        self.row_start = row_start;
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_triples(n, (0..n * n).map(|r| (r, r, 1.0)))
    }

    /// Every entry `1/N^2`: each client adopts the population average.
    pub fn uniform_rows(n: usize) -> Result<Self> {
        let dim = n * n;
        let w = 1.0 / dim as f64;
        Self::from_triples(n, (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c, w))))
    }

    /// Client `i` copies the strategy of client `sources[i]`.
    pub fn copy_client(n: usize, sources: &[usize]) -> Result<Self> {
        check_clients(n, sources)?;
        Self::from_triples(
            n,
            (0..n).flat_map(|i| (0..n).map(move |j| (i * n + j, sources[i] * n + j, 1.0))),
        )
    }

    /// Client `i` averages its own strategy with that of `partners[i]`.
    pub fn pairwise_average(n: usize, partners: &[usize]) -> Result<Self> {
        check_clients(n, partners)?;
        Self::from_triples(
            n,
            (0..n).flat_map(|i| {
                (0..n).flat_map(move |j| {
                    [
                        (i * n + j, i * n + j, 0.5),
                        (i * n + j, partners[i] * n + j, 0.5),
                    ]
                })
            }),
        )
    }

    /// `w^{ij}_{kl} = clients[i][k] * servers[j][l]`: clients mix across the
    /// population with `clients` while probability mass moves between
    /// servers according to `servers`.
    pub fn kronecker(clients: &[Vec<f64>], servers: &[Vec<f64>]) -> Result<Self> {
        let n = clients.len();
        for (name, m) in [("clients", clients), ("servers", servers)] {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::config(name, format!("factor must be {n} x {n}")));
            }
        }
        let mut triples = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let a = clients[i][k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for l in 0..n {
                        let b = servers[j][l];
                        if b != 0.0 {
                            triples.push((i * n + j, k * n + l, a * b));
                        }
                    }
                }
            }
        }
        Self::from_triples(n, triples)
    }

    /// Same matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_triples(self.n, self.triples().map(|(r, c, v)| (r, c, v * factor)))
    }

    /// Same matrix with one row multiplied by `factor`.
    pub fn with_row_scaled(&self, row: usize, factor: f64) -> Result<Self> {
        Self::from_triples(
            self.n,
            self.triples()
                .map(|(r, c, v)| (r, c, if r == row { v * factor } else { v })),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `W x` for any vector of length `N^2`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_start[r]..self.row_start[r + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    /// The client-level matrix `c_ik = sum_j w^{ij}_{kl}` when that sum does
    /// not depend on `l`. Such a `W` maps every strategy vector to one whose
    /// client blocks already sum to 1, so normalization never acts.
    pub fn client_factor(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.n;
        // sums[i][k * n + l] = sum_j w^{ij}_{kl}
        let mut sums = vec![vec![0.0; n * n]; n];
        for (r, c, v) in self.triples() {
            sums[r / n][c] += v;
        }
        let mut factor = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let block = &sums[i][k * n..(k + 1) * n];
                let first = block[0];
                if block.iter().any(|s| (s - first).abs() > MIXING_TOLERANCE) {
                    return None;
                }
                factor[i][k] = first;
            }
            let total: f64 = factor[i].iter().sum();
            if (total - 1.0).abs() > MIXING_TOLERANCE {
                return None;
            }
        }
        Some(factor)
    }
}

fn check_clients(n: usize, clients: &[usize]) -> Result<()> {
    if clients.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: clients.len(),
        });
    }
    if let Some(&bad) = clients.iter().find(|&&c| c >= n) {
        return Err(Error::ServerOutOfRange { server: bad, n });
    }
    Ok(())
}

/// First stage: `q = W p`.
pub fn linear_transform(w: &WeightMatrix, p: &FlatStrategyVector) -> Result<RawVector> {
    if w.n != p.n {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: p.entries.len(),
        });
    }
    Ok(RawVector {
        n: w.n,
        entries: w.apply(&p.entries)?,
    })
}

/// Second stage: divide every client block by its sum.
pub fn normalize(q: &RawVector) -> Result<FlatStrategyVector> {
    let n = q.n;
    if q.entries.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            found: q.entries.len(),
        });
    }
    let mut entries = q.entries.clone();
    normalize_in_place(n, &mut entries)?;
    Ok(FlatStrategyVector { n, entries })
}

fn normalize_in_place(n: usize, entries: &mut [f64]) -> Result<()> {
    for (i, block) in entries.chunks_exact_mut(n).enumerate() {
        let s: f64 = block.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateStrategy { client: i });
        }
        block.iter_mut().for_each(|x| *x /= s);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateOutcome {
    pub p_final: FlatStrategyVector,
    /// Number of updates that moved the vector by at least `tol`.
    pub iterations: usize,
    pub converged: bool,
}

/// Repeats transform + normalize until the L-infinity change of one update
/// drops below `tol`, or `max_iter` updates have been applied.
pub fn iterate(
    w: &WeightMatrix,
    p0: &FlatStrategyVector,
    tol: f64,
    max_iter: usize,
) -> Result<IterateOutcome> {
    if w.n != p0.n {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: p0.entries.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", tol, "tolerance must be positive"));
    }
    let n = w.n;
    let mut current = p0.entries.clone();
    let mut next = vec![0.0; current.len()];
    for it in 0..max_iter {
        w.apply_into(&current, &mut next);
        normalize_in_place(n, &mut next)?;
        let change = linf(&current, &next);
        std::mem::swap(&mut current, &mut next);
        if change < tol {
            return Ok(IterateOutcome {
                p_final: FlatStrategyVector { n, entries: current },
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(IterateOutcome {
        p_final: FlatStrategyVector { n, entries: current },
        iterations: max_iter,
        converged: false,
    })
}

/// Every row of `W` sums to 1.
pub fn check_row_sum_assumption(w: &WeightMatrix) -> bool {
    w.row_sums()
        .iter()
        .all(|s| (s - 1.0).abs() <= MIXING_TOLERANCE)
}

/// All row sums share one positive value, so the uniform vector is mapped to
/// itself once normalized.
pub fn check_uniform_fixed_point(w: &WeightMatrix) -> bool {
    let sums = w.row_sums();
    let first = sums[0];
    first > 0.0 && sums.iter().all(|s| (s - first).abs() <= MIXING_TOLERANCE)
}

/// Every client block of `W p` already sums to 1, so `W p` can be used as
/// the next strategy vector without normalization.
pub fn check_normalization_condition(w: &WeightMatrix, p: &FlatStrategyVector) -> bool {
    let Ok(q) = linear_transform(w, p) else {
        return false;
    };
    (0..q.n).all(|i| (q.block_sum(i) - 1.0).abs() <= MIXING_TOLERANCE)
}

/// At the uniform vector the normalization condition reduces to: for every
/// client `i`, the weights in the `N` rows of block `i` total `N`.
pub fn check_uniform_normalization(w: &WeightMatrix) -> bool {
    let n = w.n;
    let sums = w.row_sums();
    sums.chunks_exact(n)
        .all(|block| (block.iter().sum::<f64>() - n as f64).abs() <= MIXING_TOLERANCE * n as f64)
}
