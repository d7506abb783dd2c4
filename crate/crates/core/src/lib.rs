//! Client/server matching under the Kolkata Paise Restaurant game.
//!
//! `N` clients each request one of `N` servers per time slice; a server
//! with several requesters serves one of them uniformly at random. The
//! crate provides the round mechanics ([`model`]), per-client learning
//! rules ([`strategy`]), the DeGroot-style strategy mixing dynamics and
//! their convergence certificates ([`mixing`]), closed-form reference
//! curves ([`theory`]) and a replicated experiment runner ([`runner`]).

pub mod error;
pub mod mixing;
pub mod model;
pub mod rng;
pub mod runner;
pub mod strategy;
pub mod theory;

pub use error::{Error, Result};
pub use mixing::{
    certify_uniform_consensus, iterate, FlatStrategyVector, Verdict, WeightMatrix,
};
pub use model::{
    resolve_round, sample_requests, stability_fraction, utilization_fraction, Allocation,
    ConflictResolver, RoundOutcome, StrategyMatrix,
};
pub use rng::RngStream;
pub use runner::{
    run_mixed, run_replications, run_simulation, sweep, ExperimentConfig, PopulationGroup,
    SweepParameter, TimeSeries,
};
pub use strategy::{ClientState, PolyaState, StrategyKind};
