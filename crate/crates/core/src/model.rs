//! Game state and per-slice mechanics.
//!
//! A slice runs in three steps: every client samples one server from its
//! strategy row ([`sample_requests`]), each requested server serves one of its
//! requesters chosen uniformly at random ([`resolve_round`]), and the slice is
//! scored ([`utilization_fraction`], [`stability_fraction`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Allowed deviation of a strategy row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default probability a client must put on a single server to count as stable.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.99;

/// Per-client probability rows over servers, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMatrix {
    n: usize,
    probs: Vec<f64>,
}

impl StrategyMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        let mut probs = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedRow {
                    client: i,
                    reason: format!("row has {} entries, expected {n}", row.len()),
                });
            }
            probs.extend(row);
        }
        let m = Self { n, probs };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, client: usize) -> &[f64] {
        &self.probs[client * self.n..(client + 1) * self.n]
    }

    /// Mutable access to a row. Callers that edit rows are responsible for
    /// keeping them on the simplex; [`sample_requests`] re-validates.
    pub fn row_mut(&mut self, client: usize) -> &mut [f64] {
        &mut self.probs[client * self.n..(client + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n)
    }

    /// Checks non-negativity and unit row sums, naming the first bad client.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            validate_row(i, row)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_row(client: usize, row: &[f64]) -> Result<()> {
    if let Some(j) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::MalformedRow {
            client,
            reason: format!("entry {j} = {} is not a probability", row[j]),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::MalformedRow {
            client,
            reason: format!("row sums to {sum}, expected 1"),
        });
    }
    Ok(())
}

/// Which server every client requests during one slice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    n_servers: usize,
    requests: Vec<usize>,
}

impl Allocation {
    pub fn new(requests: Vec<usize>, n_servers: usize) -> Result<Self> {
        if n_servers == 0 {
            return Err(Error::InvalidSize(0));
        }
        if let Some(&server) = requests.iter().find(|&&s| s >= n_servers) {
            return Err(Error::ServerOutOfRange {
                server,
                n: n_servers,
            });
        }
        Ok(Self {
            n_servers,
            requests,
        })
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn requests(&self) -> &[usize] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Number of servers that received at least one request.
    pub fn distinct_servers(&self) -> usize {
        let mut seen = vec![false; self.n_servers];
        let mut count = 0;
        for &s in &self.requests {
            if !seen[s] {
                seen[s] = true;
                count += 1;
            }
        }
        count
    }
}

/// The resolved slice: who asked where, who was served, and by whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub allocation: Allocation,
    /// `fulfilled[i]` is the payoff of client `i` this slice.
    pub fulfilled: Vec<bool>,
    /// `winners[j]` is the client served by server `j`, if any.
    pub winners: Vec<Option<usize>>,
}

impl RoundOutcome {
    pub fn fulfilled_count(&self) -> usize {
        self.fulfilled.iter().filter(|&&f| f).count()
    }
}

/// Draws one server per client from the categorical law of its row.
pub fn sample_requests(strategies: &StrategyMatrix, rng: &mut RngStream) -> Result<Allocation> {
    strategies.validate()?;
    let requests = strategies
        .rows()
        .map(|row| sample_categorical(row, rng))
        .collect();
    Ok(Allocation {
        n_servers: strategies.n,
        requests,
    })
}

/// Inverse-CDF draw from a (not necessarily normalized) non-negative row.
/// Never returns an index with zero weight.
pub(crate) fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.unit() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = j;
            if target < acc {
                return j;
            }
        }
    }
    // Rounding left `target` at or past the final partial sum.
    last_positive
}

/// Reusable scratch space for conflict resolution.
///
/// Requesters are bucketed per server in client order; servers are visited in
/// ascending index and every server with two or more requesters consumes one
/// `rng.index(requesters)` draw. Servers with a single requester draw nothing.
#[derive(Debug, Clone, Default)]
pub struct ConflictResolver {
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl ConflictResolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resolves `requests` over `n_servers` servers, writing payoffs into
    /// `fulfilled` and the served client of each server into `winners`.
    pub fn resolve_into(
        &mut self,
        requests: &[usize],
        n_servers: usize,
        rng: &mut RngStream,
        fulfilled: &mut Vec<bool>,
        winners: &mut Vec<Option<usize>>,
    ) {
        self.offsets.clear();
        self.offsets.resize(n_servers + 1, 0);
        for &s in requests {
            self.offsets[s + 1] += 1;
        }
        for j in 0..n_servers {
            self.offsets[j + 1] += self.offsets[j];
        }
        self.members.clear();
        self.members.resize(requests.len(), 0);
        // Fill buckets using the upper offsets as cursors, walking clients in
        // reverse so each bucket ends up in ascending client order.
        let mut cursor = self.offsets.clone();
        for (client, &s) in requests.iter().enumerate().rev() {
            cursor[s + 1] -= 1;
            self.members[cursor[s + 1]] = client;
        }

        fulfilled.clear();
        fulfilled.resize(requests.len(), false);
        winners.clear();
        winners.resize(n_servers, None);
        for j in 0..n_servers {
            let bucket = &self.members[self.offsets[j]..self.offsets[j + 1]];
            let winner = match bucket.len() {
                0 => continue,
                1 => bucket[0],
                k => bucket[rng.index(k)],
            };
            fulfilled[winner] = true;
            winners[j] = Some(winner);
        }
    }
}

/// Serves one uniformly chosen requester at every requested server.
pub fn resolve_round(allocation: &Allocation, rng: &mut RngStream) -> RoundOutcome {
    let mut fulfilled = Vec::new();
    let mut winners = Vec::new();
    ConflictResolver::new().resolve_into(
        &allocation.requests,
        allocation.n_servers,
        rng,
        &mut fulfilled,
        &mut winners,
    );
    RoundOutcome {
        allocation: allocation.clone(),
        fulfilled,
        winners,
    }
}

/// Fraction of servers that fulfilled a request this slice.
pub fn utilization_fraction(outcome: &RoundOutcome) -> f64 {
    let busy = outcome.winners.iter().filter(|w| w.is_some()).count();
    busy as f64 / outcome.allocation.n_servers as f64
}

/// Fraction of clients whose largest server probability is at least
/// `threshold` (non-strict).
pub fn stability_fraction(strategies: &StrategyMatrix, threshold: f64) -> f64 {
    let stable = strategies
        .rows()
        .filter(|row| row.iter().copied().fold(0.0, f64::max) >= threshold)
        .count();
    stable as f64 / strategies.n as f64
}

/// True iff every client requested a different server: the conflict-free
/// allocation that is both Pareto efficient and a pure Nash equilibrium.
pub fn is_pareto_nash(allocation: &Allocation) -> bool {
    allocation.distinct_servers() == allocation.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> StrategyMatrix {
        StrategyMatrix::from_rows(vec![vec![1.0 / n as f64; n]; n]).unwrap()
    }

    fn one_hot(n: usize, at: impl Fn(usize) -> usize) -> StrategyMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[at(i)] = 1.0;
                r
            })
            .collect();
        StrategyMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn point_mass_rows_all_request_server_zero() {
        let m = one_hot(6, |_| 0);
        let a = sample_requests(&m, &mut RngStream::new(1, 0)).unwrap();
        assert!(a.requests().iter().all(|&s| s == 0));
    }

    #[test]
    fn permutation_rows_request_distinct_servers() {
        let m = one_hot(7, |i| i);
        let a = sample_requests(&m, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(a.requests(), &[0, 1, 2, 3, 4, 5, 6]);
        assert!(is_pareto_nash(&a));
    }

    #[test]
    fn malformed_row_names_client() {
        let mut m = uniform(3);
        m.row_mut(2)[0] += 0.1;
        let err = sample_requests(&m, &mut RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { client: 2, .. }), "{err}");
        assert!(StrategyMatrix::from_rows(vec![vec![0.5, 0.5], vec![1.5, -0.5]]).is_err());
        assert!(StrategyMatrix::from_rows(vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn uniform_pair_is_fair() {
        let m = uniform(2);
        let mut rng = RngStream::new(99, 0);
        let draws = 100_000;
        let mut zeros = 0usize;
        for _ in 0..draws / 2 {
            let a = sample_requests(&m, &mut rng).unwrap();
            zeros += a.requests().iter().filter(|&&s| s == 0).count();
        }
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn no_conflict_serves_everyone() {
        let a = Allocation::new(vec![3, 1, 0, 2], 4).unwrap();
        let o = resolve_round(&a, &mut RngStream::new(0, 0));
        assert!(o.fulfilled.iter().all(|&f| f));
        assert_eq!(utilization_fraction(&o), 1.0);
    }

    #[test]
    fn maximal_conflict_serves_one() {
        let a = Allocation::new(vec![0; 10], 10).unwrap();
        let o = resolve_round(&a, &mut RngStream::new(0, 0));
        assert_eq!(o.fulfilled_count(), 1);
        assert!((utilization_fraction(&o) - 0.1).abs() < 1e-15);
        assert!(!is_pareto_nash(&a));
    }

    #[test]
    fn three_way_conflict_is_uniform() {
        let a = Allocation::new(vec![1, 1, 1], 3).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut wins = [0usize; 3];
        let trials = 100_000;
        for _ in 0..trials {
            let o = resolve_round(&a, &mut rng);
            wins[o.winners[1].unwrap()] += 1;
        }
        for w in wins {
            let share = w as f64 / trials as f64;
            assert!((share - 1.0 / 3.0).abs() < 0.01, "{share}");
        }
    }

    #[test]
    fn allocation_rejects_bad_server() {
        assert!(matches!(
            Allocation::new(vec![0, 4], 4),
            Err(Error::ServerOutOfRange { server: 4, n: 4 })
        ));
    }

    #[test]
    fn stability_counts() {
        assert_eq!(stability_fraction(&uniform(5), 0.99), 0.0);
        assert_eq!(stability_fraction(&one_hot(5, |i| i), 0.99), 1.0);
        let n = 100;
        let rows = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    let mut r = vec![0.0; n];
                    r[i] = 1.0;
                    r
                } else {
                    vec![1.0 / n as f64; n]
                }
            })
            .collect();
        let m = StrategyMatrix::from_rows(rows).unwrap();
        assert_eq!(stability_fraction(&m, 0.99), 0.5);
        // Non-strict at the threshold.
        let m = StrategyMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(stability_fraction(&m, 0.5), 1.0);
    }

    #[test]
    fn pareto_nash_is_distinctness() {
        assert!(is_pareto_nash(&Allocation::new(vec![0, 1, 2], 3).unwrap()));
        assert!(!is_pareto_nash(&Allocation::new(vec![0, 2, 2], 3).unwrap()));
    }

    #[test]
    fn random_allocations_at_scale_collide() {
        // P(no collision among 1000 uniform draws over 1000 servers) = 1000!/1000^1000,
        // roughly e^-1000, so every one of 100 trials must collide.
        let m = 1000;
        let mut rng = RngStream::new(2024, 0);
        for _ in 0..100 {
            let requests = (0..m).map(|_| rng.index(m)).collect();
            assert!(!is_pareto_nash(&Allocation::new(requests, m).unwrap()));
        }
    }
}
