//! Probability rows that can be updated and sampled in `O(log N)`.
//!
//! A [`Row`] is either implicit (uniform, or a point mass) or backed by a
//! [`WeightedRow`]: unnormalized non-negative weights in a segment tree that
//! keeps subtree sums and maxima. Probabilities are always `weight / total`,
//! so renormalization after every update is implicit and costs nothing.

use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WeightedRow {
    n: usize,
    /// Number of leaves (power of two, at least `n`).
    width: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
}

impl WeightedRow {
    pub fn from_weights(weights: &[f64]) -> Self {
        let n = weights.len();
        let width = n.next_power_of_two().max(1);
        let mut row = Self {
            n,
            width,
            sum: vec![0.0; 2 * width],
            max: vec![0.0; 2 * width],
        };
        row.sum[width..width + n].copy_from_slice(weights);
        row.max[width..width + n].copy_from_slice(weights);
        for node in (1..width).rev() {
            row.pull(node);
        }
        row
    }

    #[inline]
    fn pull(&mut self, node: usize) {
        let (l, r) = (2 * node, 2 * node + 1);
        self.sum[node] = self.sum[l] + self.sum[r];
        self.max[node] = self.max[l].max(self.max[r]);
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.sum[self.width + j]
    }

    pub fn max_weight(&self) -> f64 {
        self.max[1]
    }

    pub fn set(&mut self, j: usize, w: f64) {
        let mut node = self.width + j;
        self.sum[node] = w;
        self.max[node] = w;
        while node > 1 {
            node /= 2;
            self.pull(node);
        }
    }

    /// Total weight of every entry except `j`, summed from the siblings on
    /// the leaf-to-root path so no cancellation occurs when `j` dominates.
    pub fn weight_excluding(&self, j: usize) -> f64 {
        let mut node = self.width + j;
        let mut acc = 0.0;
        while node > 1 {
            acc += self.sum[node ^ 1];
            node /= 2;
        }
        acc
    }

    /// Entry whose cumulative weight interval contains `u * total`.
    pub fn sample(&self, u: f64) -> usize {
        let mut target = u * self.total();
        let mut node = 1;
        while node < self.width {
            let (l, r) = (2 * node, 2 * node + 1);
            if target < self.sum[l] || self.sum[r] <= 0.0 {
                node = l;
            } else {
                target -= self.sum[l];
                node = r;
            }
        }
        node - self.width
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total();
        self.sum[self.width..self.width + self.n]
            .iter()
            .map(|w| w / total)
            .collect()
    }

    /// Rescales so the weights sum to one when they drift far from it.
    fn keep_in_range(&mut self) {
        let total = self.total();
        if (1e-100..=1e100).contains(&total) {
            return;
        }
        for node in self.width..self.width + self.n {
            self.sum[node] /= total;
            self.max[node] = self.sum[node];
        }
        for node in (1..self.width).rev() {
            self.pull(node);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Row {
    Uniform,
    OneHot(usize),
    Weighted(WeightedRow),
}

impl Row {
    pub fn from_probabilities(probs: &[f64]) -> Self {
        let n = probs.len();
        let uniform = 1.0 / n as f64;
        if probs.iter().all(|&p| p == uniform) {
            return Row::Uniform;
        }
        if let Some(j) = probs.iter().position(|&p| p == 1.0) {
            if probs.iter().filter(|&&p| p != 0.0).count() == 1 {
                return Row::OneHot(j);
            }
        }
        Row::Weighted(WeightedRow::from_weights(probs))
    }

    pub fn probability(&self, n: usize, j: usize) -> f64 {
        match self {
            Row::Uniform => 1.0 / n as f64,
            Row::OneHot(at) => f64::from(u8::from(*at == j)),
            Row::Weighted(w) => w.weight(j) / w.total(),
        }
    }

    pub fn max_probability(&self, n: usize) -> f64 {
        match self {
            Row::Uniform => 1.0 / n as f64,
            Row::OneHot(_) => 1.0,
            Row::Weighted(w) => w.max_weight() / w.total(),
        }
    }

    pub fn to_vec(&self, n: usize) -> Vec<f64> {
        match self {
            Row::Uniform => vec![1.0 / n as f64; n],
            Row::OneHot(at) => {
                let mut v = vec![0.0; n];
                v[*at] = 1.0;
                v
            }
            Row::Weighted(w) => w.probabilities(),
        }
    }

    #[inline]
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> usize {
        match self {
            Row::Uniform => rng.index(n),
            Row::OneHot(at) => *at,
            Row::Weighted(w) => w.sample(rng.unit()),
        }
    }

    /// `(p_j, 1 - p_j)` with the complement computed without cancellation.
    pub fn split_at(&self, n: usize, j: usize) -> (f64, f64) {
        match self {
            Row::Uniform => {
                let p = 1.0 / n as f64;
                (p, (n - 1) as f64 * p)
            }
            Row::OneHot(at) if *at == j => (1.0, 0.0),
            Row::OneHot(_) => (0.0, 1.0),
            Row::Weighted(w) => {
                let own = w.weight(j);
                let rest = w.weight_excluding(j);
                let total = own + rest;
                (own / total, rest / total)
            }
        }
    }

    fn weighted_mut(&mut self, n: usize) -> &mut WeightedRow {
        if !matches!(self, Row::Weighted(_)) {
            *self = Row::Weighted(WeightedRow::from_weights(&self.to_vec(n)));
        }
        match self {
            Row::Weighted(w) => w,
            _ => unreachable!(),
        }
    }

    /// Sets `p_j = target` and rescales every other entry by the common
    /// factor that keeps the row on the simplex. `rest_after` is `1 - target`
    /// as computed by the caller (avoids cancellation near 1); it must be
    /// positive unless `target` is 1.
    pub fn set_and_rescale(&mut self, n: usize, j: usize, target: f64, rest_after: f64) {
        if rest_after <= 0.0 {
            *self = Row::OneHot(j);
            return;
        }
        let w = self.weighted_mut(n);
        let rest_weight = w.weight_excluding(j);
        if rest_weight <= 0.0 {
            // Every other entry is zero: nothing to rescale proportionally.
            *self = Row::OneHot(j);
            return;
        }
        let own = (target.max(0.0) / rest_after) * rest_weight;
        w.set(j, own);
        w.keep_in_range();
    }

    /// Sets `p_j = target` and spreads the remaining mass evenly over the
    /// other `n - 1` entries. Requires `n >= 2`.
    pub fn set_and_spread(&mut self, n: usize, j: usize, target: f64) {
        debug_assert!(n >= 2);
        let other = (1.0 - target) / (n - 1) as f64;
        let mut weights = vec![other; n];
        weights[j] = target;
        *self = Row::Weighted(WeightedRow::from_weights(&weights));
    }
}
