use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Reinforcement increment `k = mN / (N - m)` for multiplier `m` and
/// population `n`. Defined for `0 <= m < n`.
pub fn polya_multiplier_k(m: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::param("m", m, "multiplier must be a non-negative real"));
    }
    if m >= nf {
        return Err(Error::param("m", m, format!("multiplier must be below N = {n}")));
    }
    Ok(m * nf / (nf - m))
}

/// Success counts of one client under urn reinforcement.
///
/// Every server starts with weight 1; each fulfilled request at server `j`
/// adds `k` to its weight, so
/// `p_j = (1 + k * count_j) / (N + k * total)`.
///
/// `k` may be infinite (multiplier `m = N`), in which case the row is
/// uniform until the first success and proportional to counts afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyaState {
    n: usize,
    k: f64,
    counts: HashMap<usize, u64>,
    max_count: u64,
    /// One entry per success, in order. Drawing a uniform element of this
    /// list samples a server proportionally to its count in O(1).
    urn: Vec<u32>,
}

impl PolyaState {
    pub fn new(n: usize, k: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(0));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidSize(n));
        }
        if k.is_nan() || k < 0.0 {
            return Err(Error::param("k", k, "reinforcement must be non-negative"));
        }
        Ok(Self {
            n,
            k,
            counts: HashMap::new(),
            max_count: 0,
            urn: Vec::new(),
        })
    }

    /// State for multiplier `m` in `[0, n]`; `m = n` selects the `k = inf` limit.
    pub fn with_multiplier(n: usize, m: f64) -> Result<Self> {
        let k = if m == n as f64 {
            f64::INFINITY
        } else {
            polya_multiplier_k(m, n)?
        };
        Self::new(n, k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Multiplier `m = kN / (N + k)` that produces this state's `k`.
    pub fn multiplier(&self) -> f64 {
        let nf = self.n as f64;
        if self.k.is_infinite() {
            nf
        } else {
            self.k * nf / (nf + self.k)
        }
    }

    pub fn count(&self, server: usize) -> u64 {
        self.counts.get(&server).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &HashMap<usize, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.urn.len() as u64
    }

    pub fn record_success(&mut self, server: usize) -> Result<()> {
        if server >= self.n {
            return Err(Error::ServerOutOfRange { server, n: self.n });
        }
        let c = self.counts.entry(server).or_insert(0);
        *c += 1;
        self.max_count = self.max_count.max(*c);
        self.urn.push(server as u32);
        Ok(())
    }

    fn weight_of(&self, count: u64) -> f64 {
        let nf = self.n as f64;
        let total = self.total();
        if total == 0 || self.k == 0.0 {
            return 1.0 / nf;
        }
        if self.k.is_infinite() {
            return count as f64 / total as f64;
        }
        (1.0 + self.k * count as f64) / (nf + self.k * total as f64)
    }

    pub fn probability(&self, server: usize) -> f64 {
        self.weight_of(self.count(server))
    }

    pub fn max_probability(&self) -> f64 {
        self.weight_of(self.max_count)
    }

    pub fn row(&self) -> Vec<f64> {
        let mut row = vec![self.weight_of(0); self.n];
        for (&j, &c) in &self.counts {
            row[j] = self.weight_of(c);
        }
        row
    }

    /// Mixture draw: with probability `N / (N + k * total)` a uniform server,
    /// otherwise a server drawn proportionally to its success count.
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let total = self.urn.len();
        if total == 0 || self.k == 0.0 {
            return rng.index(self.n);
        }
        let nf = self.n as f64;
        let uniform_share = if self.k.is_infinite() {
            0.0
        } else {
            nf / (nf + self.k * total as f64)
        };
        if rng.unit() < uniform_share {
            rng.index(self.n)
        } else {
            self.urn[rng.index(total)] as usize
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_formula() {
        assert_eq!(polya_multiplier_k(0.0, 1000).unwrap(), 0.0);
        assert!((polya_multiplier_k(1.0, 1000).unwrap() - 1000.0 / 999.0).abs() < 1e-12);
        assert_eq!(polya_multiplier_k(500.0, 1000).unwrap(), 1000.0);
        assert!(polya_multiplier_k(1000.0, 1000).is_err());
        assert!(polya_multiplier_k(-1.0, 1000).is_err());
    }

    #[test]
    fn fresh_state_is_uniform() {
        let s = PolyaState::new(5, 3.0).unwrap();
        assert_eq!(s.row(), vec![0.2; 5]);
    }

    #[test]
    fn zero_reinforcement_stays_uniform() {
        let mut s = PolyaState::with_multiplier(4, 0.0).unwrap();
        for j in [0, 0, 3, 1] {
            s.record_success(j).unwrap();
        }
        assert_eq!(s.row(), vec![0.25; 4]);
        assert_eq!(s.total(), 4);
    }

    #[test]
    fn counts_shape_the_row() {
        let mut s = PolyaState::new(4, 4.0).unwrap();
        s.record_success(2).unwrap();
        let row = s.row();
        let expect = [1.0 / 8.0, 1.0 / 8.0, 5.0 / 8.0, 1.0 / 8.0];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s.max_probability(), 5.0 / 8.0);
        assert!((s.multiplier() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_limit_pins_after_first_success() {
        let mut s = PolyaState::with_multiplier(10, 10.0).unwrap();
        assert!(s.k().is_infinite());
        assert_eq!(s.max_probability(), 0.1);
        s.record_success(7).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng), 7);
        }
        assert_eq!(s.probability(7), 1.0);
    }
}
