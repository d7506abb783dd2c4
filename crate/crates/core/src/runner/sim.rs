use rand::seq::SliceRandom;

use super::ExperimentConfig;
use crate::error::Result;
use crate::model::{ConflictResolver, StrategyMatrix};
use crate::rng::RngStream;
use crate::strategy::ClientState;

/// Tallies for one slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceRecord {
    pub t: usize,
    /// Clients served, equal to the number of busy servers.
    pub fulfilled: usize,
    /// Clients whose largest probability reaches the threshold after updating.
    pub stable: usize,
    pub group_fulfilled: Vec<usize>,
}

/// A single replication advanced one slice at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    n: usize,
    threshold: f64,
    groups: usize,
    clients: Vec<ClientState>,
    group_of: Vec<usize>,
    rng: RngStream,
    resolver: ConflictResolver,
    requests: Vec<usize>,
    fulfilled: Vec<bool>,
    winners: Vec<Option<usize>>,
    t: usize,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig, replication: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed, replication);
        let mut group_of: Vec<usize> = config
            .groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| std::iter::repeat_n(g, group.size))
            .collect();
        if config.shuffle_groups {
            group_of.shuffle(&mut rng);
        }
        let clients = group_of
            .iter()
            .map(|&g| ClientState::new(config.groups[g].kind, config.n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: config.n,
            threshold: config.stability_threshold,
            groups: config.groups.len(),
            clients,
            group_of,
            rng,
            resolver: ConflictResolver::new(),
            requests: Vec::with_capacity(config.n),
            fulfilled: Vec::with_capacity(config.n),
            winners: Vec::with_capacity(config.n),
            t: 0,
        })
    }

    /// Completed slices.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    /// Group index of each client.
    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    /// Requests of the most recent slice.
    pub fn requests(&self) -> &[usize] {
        &self.requests
    }

    /// Payoffs of the most recent slice.
    pub fn fulfilled(&self) -> &[bool] {
        &self.fulfilled
    }

    /// Dense copy of every client's current row.
    pub fn strategies(&self) -> Result<StrategyMatrix> {
        StrategyMatrix::from_rows(self.clients.iter().map(|c| c.row()).collect())
    }

    pub fn step(&mut self) -> Result<SliceRecord> {
        self.requests.clear();
        for c in &self.clients {
            self.requests.push(c.sample(&mut self.rng));
        }
        self.resolver.resolve_into(
            &self.requests,
            self.n,
            &mut self.rng,
            &mut self.fulfilled,
            &mut self.winners,
        );

        let mut group_fulfilled = vec![0; self.groups];
        let mut served = 0;
        for (i, &ok) in self.fulfilled.iter().enumerate() {
            if ok {
                served += 1;
                group_fulfilled[self.group_of[i]] += 1;
            }
        }

        let mut stable = 0;
        for (i, c) in self.clients.iter_mut().enumerate() {
            c.update(self.requests[i], self.fulfilled[i])?;
            if c.max_probability() >= self.threshold {
                stable += 1;
            }
        }
        self.t += 1;
        Ok(SliceRecord {
            t: self.t,
            fulfilled: served,
            stable,
            group_fulfilled,
        })
    }
}
