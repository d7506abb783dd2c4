//! Convergence certificates for the mixing dynamics.
//!
//! For a row-stochastic `W` the long-run behaviour is fixed by its closed
//! strongly connected classes: a closed class of period `d` contributes the
//! `d`-th roots of unity to the unit-circle spectrum, and everything else
//! decays.
//!
//! Strategy vectors only move inside `u + Z`, where `u` is uniform and `Z`
//! holds vectors whose client blocks sum to zero. When every client block of
//! `W p` sums to 1 for every strategy vector `p`, `W` factors through the
//! client-level matrix `C` (see [`WeightMatrix::client_factor`]) on the
//! block sums, so the unit-circle spectrum of `W` restricted to `Z` is that
//! of `W` minus that of `C`. The verdict is then exact:
//!
//! * nothing left            -> every start converges to uniform `1/N`;
//! * only eigenvalue 1 left  -> every start converges, not always to uniform;
//! * a root of unity `!= 1`  -> some start oscillates forever.
//!
//! Otherwise (normalization genuinely rescales blocks) the verdict falls back
//! to the classical rule on `W` alone: convergence iff every closed class is
//! aperiodic, uniform consensus iff additionally there is exactly one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{adjacency, components_of, period_in};
use super::{check_row_sum_assumption, iterate, FlatStrategyVector, IterateOutcome, WeightMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConvergesToUniform,
    ConvergesNotUniform,
    DoesNotConverge,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConvergesToUniform => "converges-to-uniform",
            Verdict::ConvergesNotUniform => "converges-not-uniform",
            Verdict::DoesNotConverge => "does-not-converge",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub indices: Vec<usize>,
    pub closed: bool,
    /// `None` for a single index without a self-loop.
    pub period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub verdict: Verdict,
    pub components: Vec<ComponentReport>,
    /// Whether `W p` is already normalized for every strategy vector `p`.
    pub normalization_redundant: bool,
    pub reasons: Vec<String>,
}

impl ConsensusReport {
    pub fn closed_components(&self) -> impl Iterator<Item = &ComponentReport> {
        self.components.iter().filter(|c| c.closed)
    }

    pub fn periodic_components(&self) -> impl Iterator<Item = &ComponentReport> {
        self.closed_components()
            .filter(|c| c.period.is_some_and(|d| d > 1))
    }
}

fn analyse(adj: &[Vec<usize>]) -> Result<Vec<ComponentReport>> {
    components_of(adj)
        .into_iter()
        .map(|c| {
            let period = period_in(adj, &c.indices)?;
            Ok(ComponentReport {
                indices: c.indices,
                closed: c.closed,
                period,
            })
        })
        .collect()
}

/// Unit-circle eigenvalues contributed by closed classes, as reduced
/// fractions `a/d` of a full turn with multiplicity.
fn peripheral_spectrum(components: &[ComponentReport]) -> BTreeMap<(usize, usize), i64> {
    let mut spectrum = BTreeMap::new();
    for c in components.iter().filter(|c| c.closed) {
        let d = c.period.unwrap_or(1);
        for a in 0..d {
            let g = gcd(a, d);
            *spectrum.entry((a / g, d / g)).or_insert(0) += 1;
        }
    }
    spectrum
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn describe(c: &ComponentReport) -> String {
    let shown: Vec<String> = c.indices.iter().take(8).map(|i| i.to_string()).collect();
    let more = if c.indices.len() > 8 { ", ..." } else { "" };
    format!(
        "closed component {{{}{}}} ({} indices) has period {}",
        shown.join(", "),
        more,
        c.indices.len(),
        c.period.map_or("undefined".to_string(), |d| d.to_string())
    )
}

/// Structural verdict on the long-run behaviour of the mixing dynamics.
///
/// Requires every row of `W` to sum to 1.
pub fn certify_uniform_consensus(w: &WeightMatrix) -> Result<ConsensusReport> {
    if !check_row_sum_assumption(w) {
        let bad = w
            .row_sums()
            .iter()
            .position(|s| (s - 1.0).abs() > super::MIXING_TOLERANCE)
            .unwrap_or(0);
        return Err(Error::Precondition(format!(
            "weight matrix rows must sum to 1 (row {bad} sums to {})",
            w.row_sums()[bad]
        )));
    }
    let components = analyse(&adjacency(w))?;
    let closed: Vec<&ComponentReport> = components.iter().filter(|c| c.closed).collect();
    let periodic: Vec<&ComponentReport> = closed
        .iter()
        .copied()
        .filter(|c| c.period != Some(1))
        .collect();
    let mut reasons = Vec::new();

    let (verdict, redundant) = match w.client_factor() {
        Some(factor) => {
            let n = w.n();
            let client_adj: Vec<Vec<usize>> = factor
                .iter()
                .map(|row| (0..n).filter(|&k| row[k] > 0.0).collect())
                .collect();
            let client_components = analyse(&client_adj)?;
            let mut residual = peripheral_spectrum(&components);
            for (key, count) in peripheral_spectrum(&client_components) {
                *residual.entry(key).or_insert(0) -= count;
            }
            if residual.values().any(|&c| c < 0) {
                return Err(Error::Inconsistent(
                    "client factor has more unit-circle modes than W".into(),
                ));
            }
            residual.retain(|_, c| *c > 0);
            reasons.push(format!(
                "W preserves client block sums; {} closed class(es) in W, {} at client level",
                closed.len(),
                client_components.iter().filter(|c| c.closed).count()
            ));
            let verdict = if residual.is_empty() {
                Verdict::ConvergesToUniform
            } else if residual.keys().all(|&k| k == (0, 1)) {
                reasons.push(format!(
                    "{} independent consensus value(s) survive on strategy vectors",
                    residual[&(0, 1)]
                ));
                Verdict::ConvergesNotUniform
            } else {
                let orders: Vec<String> = residual
                    .keys()
                    .filter(|k| k.1 > 1)
                    .map(|k| format!("{}/{}", k.0, k.1))
                    .collect();
                reasons.push(format!(
                    "oscillating modes (fractions of a turn) reachable from strategy vectors: {}",
                    orders.join(", ")
                ));
                Verdict::DoesNotConverge
            };
            (verdict, true)
        }
        None => {
            reasons.push(
                "normalization is not redundant for W; verdict follows the linear dynamics".into(),
            );
            let verdict = if !periodic.is_empty() {
                Verdict::DoesNotConverge
            } else if closed.len() == 1 {
                Verdict::ConvergesToUniform
            } else {
                Verdict::ConvergesNotUniform
            };
            (verdict, false)
        }
    };
    if verdict == Verdict::DoesNotConverge || !redundant {
        reasons.extend(periodic.iter().map(|c| describe(c)));
    }
    if verdict == Verdict::ConvergesToUniform && closed.len() == 1 {
        reasons.push("single closed aperiodic class: consensus on 1/N".into());
    }
    Ok(ConsensusReport {
        verdict,
        components,
        normalization_redundant: redundant,
        reasons,
    })
}

/// Distance from the all-`1/N` vector below which a limit counts as uniform.
pub const UNIFORM_LIMIT_TOLERANCE: f64 = 1e-8;

/// Classifies what [`iterate`] actually does from `p0`.
pub fn empirical_verdict(
    w: &WeightMatrix,
    p0: &FlatStrategyVector,
    tol: f64,
    max_iter: usize,
) -> Result<(Verdict, IterateOutcome)> {
    let out = iterate(w, p0, tol, max_iter)?;
    let verdict = if !out.converged {
        Verdict::DoesNotConverge
    } else if out.p_final.distance_from_uniform() <= UNIFORM_LIMIT_TOLERANCE {
        Verdict::ConvergesToUniform
    } else {
        Verdict::ConvergesNotUniform
    };
    Ok((verdict, out))
}
