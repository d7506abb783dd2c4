//! Experiment orchestration: populations, replications and sweeps.
//!
//! Every slice runs strictly as sample -> resolve -> record utilization ->
//! update every client -> record stability, so no update can influence the
//! slice that caused it. Replication `r` draws from stream `r` of the
//! configured seed and replications run in parallel; results are collected
//! by index, so output does not depend on scheduling.

mod sim;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sim::{SliceRecord, Simulation};
pub use sweep::{sweep, SweepParameter, SweepRow, SweepTable};

use crate::error::{Error, Result};
use crate::model::DEFAULT_STABILITY_THRESHOLD;
use crate::strategy::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationGroup {
    pub label: String,
    pub size: usize,
    pub kind: StrategyKind,
}

impl PopulationGroup {
    pub fn new(label: impl Into<String>, size: usize, kind: StrategyKind) -> Self {
        Self {
            label: label.into(),
            size,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Number of servers, equal to the total number of clients.
    pub n: usize,
    /// Number of slices per run.
    pub horizon: usize,
    pub groups: Vec<PopulationGroup>,
    pub seed: u64,
    pub replications: usize,
    pub stability_threshold: f64,
    /// Record every `record_every`-th slice (the final slice is always kept).
    pub record_every: usize,
    /// Assign clients to groups by a random permutation (drawn from the
    /// replication's stream before slice 1) instead of contiguous blocks.
    pub shuffle_groups: bool,
}

impl ExperimentConfig {
    /// One group of `n` clients following `kind`.
    pub fn homogeneous(n: usize, horizon: usize, kind: StrategyKind, seed: u64) -> Self {
        Self {
            n,
            horizon,
            groups: vec![PopulationGroup::new(kind.name(), n, kind)],
            seed,
            replications: 1,
            stability_threshold: DEFAULT_STABILITY_THRESHOLD,
            record_every: 1,
            shuffle_groups: false,
        }
    }

    /// Learners of `kind` mixed with clients that always choose uniformly.
    pub fn mixed(
        n: usize,
        horizon: usize,
        learners: usize,
        kind: StrategyKind,
        seed: u64,
    ) -> Self {
        let mut cfg = Self::homogeneous(n, horizon, kind, seed);
        cfg.groups = vec![
            PopulationGroup::new("learners", learners, kind),
            PopulationGroup::new("random", n.saturating_sub(learners), StrategyKind::UniformRandom),
        ];
        cfg
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", format!("need at least 2 servers, got {}", self.n)));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::config("n", "population too large"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "need at least one slice"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "need at least one replication"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "stride must be positive"));
        }
        if !(self.stability_threshold > 0.0 && self.stability_threshold <= 1.0) {
            return Err(Error::config(
                "stability_threshold",
                format!("{} is not in (0, 1]", self.stability_threshold),
            ));
        }
        if self.groups.is_empty() {
            return Err(Error::config("groups", "need at least one population group"));
        }
        for (i, g) in self.groups.iter().enumerate() {
            g.kind
                .validate(self.n)
                .map_err(|e| Error::config(format!("group[{i}] ({})", g.label), e.to_string()))?;
        }
        let total: usize = self.groups.iter().map(|g| g.size).sum();
        if total != self.n {
            return Err(Error::config(
                "groups",
                format!("group sizes sum to {total}, expected n = {}", self.n),
            ));
        }
        Ok(())
    }

    /// Slices (1-based) that end up in the recorded series.
    pub fn recorded_slices(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = (1..=self.horizon)
            .filter(|t| t % self.record_every == 0)
            .collect();
        if ts.last() != Some(&self.horizon) {
            ts.push(self.horizon);
        }
        ts
    }
}

/// Per-slice mean and standard deviation across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    /// Sample standard deviation; zero for a single replication.
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub label: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub n: usize,
    pub replications: usize,
    pub groups: Vec<GroupInfo>,
    /// Recorded slice numbers, starting at 1.
    pub slices: Vec<usize>,
    /// Fraction of servers that served a request during the slice.
    pub utilization: Series,
    /// Fraction of stable clients after the slice's updates.
    pub stability: Series,
    /// Fraction of each group's clients served during the slice; 0 for an
    /// empty group.
    pub group_rates: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub utilization: f64,
    pub stability: f64,
    pub group_rates: Vec<f64>,
    /// Number of recorded slices averaged.
    pub window: usize,
}

impl TimeSeries {
    /// Means over the final 10% of recorded slices (at least one).
    pub fn steady_state(&self) -> SteadyState {
        let len = self.slices.len();
        let window = len.div_ceil(10).max(1);
        let tail = |v: &[f64]| v[len - window..].iter().sum::<f64>() / window as f64;
        SteadyState {
            utilization: tail(&self.utilization.mean),
            stability: tail(&self.stability.mean),
            group_rates: self.group_rates.iter().map(|s| tail(&s.mean)).collect(),
            window,
        }
    }
}

/// Integer tallies of one replication at the recorded slices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RunCounts {
    pub fulfilled: Vec<u64>,
    pub stable: Vec<u64>,
    pub group_fulfilled: Vec<Vec<u64>>,
}

pub(crate) fn run_counts(config: &ExperimentConfig, replication: u64) -> Result<RunCounts> {
    let mut sim = Simulation::new(config, replication)?;
    let slices = config.recorded_slices();
    let mut counts = RunCounts {
        fulfilled: Vec::with_capacity(slices.len()),
        stable: Vec::with_capacity(slices.len()),
        group_fulfilled: vec![Vec::with_capacity(slices.len()); config.groups.len()],
    };
    let mut next = slices.iter().peekable();
    for t in 1..=config.horizon {
        let rec = sim.step()?;
        if next.peek() == Some(&&t) {
            next.next();
            counts.fulfilled.push(rec.fulfilled as u64);
            counts.stable.push(rec.stable as u64);
            for (g, &c) in rec.group_fulfilled.iter().enumerate() {
                counts.group_fulfilled[g].push(c as u64);
            }
        }
    }
    Ok(counts)
}

fn aggregate_series(runs: &[&[u64]], denominator: usize) -> Series {
    let reps = runs.len();
    let len = runs[0].len();
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for t in 0..len {
        if denominator == 0 {
            mean.push(0.0);
            std.push(0.0);
            continue;
        }
        let total: u64 = runs.iter().map(|r| r[t]).sum();
        let m = total as f64 / (denominator * reps) as f64;
        mean.push(m);
        let s = if reps > 1 {
            let ss: f64 = runs
                .iter()
                .map(|r| (r[t] as f64 / denominator as f64 - m).powi(2))
                .sum();
            (ss / (reps - 1) as f64).sqrt()
        } else {
            0.0
        };
        std.push(s);
    }
    Series { mean, std }
}

pub(crate) fn aggregate(config: &ExperimentConfig, runs: &[RunCounts]) -> TimeSeries {
    let fulfilled: Vec<&[u64]> = runs.iter().map(|r| r.fulfilled.as_slice()).collect();
    let stable: Vec<&[u64]> = runs.iter().map(|r| r.stable.as_slice()).collect();
    let group_rates = config
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let per: Vec<&[u64]> = runs.iter().map(|r| r.group_fulfilled[g].as_slice()).collect();
            aggregate_series(&per, group.size)
        })
        .collect();
    TimeSeries {
        n: config.n,
        replications: runs.len(),
        groups: config
            .groups
            .iter()
            .map(|g| GroupInfo {
                label: g.label.clone(),
                size: g.size,
            })
            .collect(),
        slices: config.recorded_slices(),
        utilization: aggregate_series(&fulfilled, config.n),
        stability: aggregate_series(&stable, config.n),
        group_rates,
    }
}

/// One run on stream 0 of the configured seed, ignoring `replications`.
pub fn run_simulation(config: &ExperimentConfig) -> Result<TimeSeries> {
    config.validate()?;
    let counts = run_counts(config, 0)?;
    Ok(aggregate(config, &[counts]))
}

/// `replications` independent runs on streams `0..R`, aggregated per slice.
pub fn run_replications(config: &ExperimentConfig) -> Result<TimeSeries> {
    config.validate()?;
    let runs = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_counts(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, &runs))
}

/// Replicated run of a heterogeneous population; the result carries one
/// success-rate series per group.
pub fn run_mixed(config: &ExperimentConfig) -> Result<TimeSeries> {
    run_replications(config)
}
