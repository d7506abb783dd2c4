use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kpr_core::mixing::{
    empirical_verdict, parse_strategy_vector, parse_weight_matrix, ComponentReport,
};
use kpr_core::runner::{sweep, SweepParameter};
use kpr_core::theory::{
    poisson_idle_probability, random_choice_utilization, strategy1_limit_interval,
    strategy1_recursion,
};
use kpr_core::{certify_uniform_consensus, run_replications, FlatStrategyVector, RngStream, Verdict};
use serde::{Deserialize, Serialize};

use crate::config::load_config;
use crate::output::{
    ensure_dir, now, parse_table, sha256_hex, sweep_csv, sweep_table, timeseries_csv,
    timeseries_table, write_verified, RunManifest, Summary, SweepRequest,
};
use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn manifest_bytes(m: &RunManifest) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(m).map_err(|e| CliError::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Runs the configured experiment and writes `timeseries.csv`,
/// `summary.json` and `manifest.json` into `out_dir`.
pub fn cmd_run(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunManifest, CliError> {
    let started_at = now();
    let text = read(config_path)?;
    let config = load_config(&text, seed)?;
    let ts = run_replications(&config)?;

    let csv = timeseries_csv(&ts)?;
    if parse_table(&csv)? != timeseries_table(&ts) {
        return Err(CliError::Format("timeseries.csv does not round-trip".into()));
    }
    let mut summary =
        serde_json::to_vec_pretty(&Summary::new(&ts, &config)).map_err(|e| CliError::Format(e.to_string()))?;
    summary.push(b'\n');

    ensure_dir(out_dir)?;
    let outputs = vec![
        write_verified(out_dir, "timeseries.csv", &csv)?,
        write_verified(out_dir, "summary.json", &summary)?,
    ];
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: config.seed,
        config,
        sweep: None,
        started_at,
        finished_at: now(),
        outputs,
    };
    write_verified(out_dir, "manifest.json", &manifest_bytes(&manifest)?)?;
    Ok(manifest)
}

/// Runs one aggregated experiment per value and writes `sweep.csv` and
/// `manifest.json`.
pub fn cmd_sweep(
    config_path: &Path,
    parameter: SweepParameter,
    values: &[f64],
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<RunManifest, CliError> {
    let started_at = now();
    let text = read(config_path)?;
    let config = load_config(&text, seed)?;
    let table = sweep(&config, parameter, values)?;

    let csv = sweep_csv(&table)?;
    if parse_table(&csv)? != sweep_table(&table) {
        return Err(CliError::Format("sweep.csv does not round-trip".into()));
    }
    ensure_dir(out_dir)?;
    let outputs = vec![write_verified(out_dir, "sweep.csv", &csv)?];
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "sweep".into(),
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: config.seed,
        config,
        sweep: Some(SweepRequest {
            parameter: parameter.name().into(),
            values: values.to_vec(),
        }),
        started_at,
        finished_at: now(),
        outputs,
    };
    write_verified(out_dir, "manifest.json", &manifest_bytes(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TheoryQuery {
    Poisson { lambda: f64 },
    Recursion { horizon: usize },
    Limit,
}

/// Text printed by `kpr theory`. The recursion is emitted as CSV.
pub fn cmd_theory(query: &TheoryQuery) -> Result<String, CliError> {
    let mut out = String::new();
    match *query {
        TheoryQuery::Poisson { lambda } => {
            let idle = poisson_idle_probability(lambda)?;
            let used = random_choice_utilization(lambda)?;
            let _ = writeln!(out, "lambda = {lambda}");
            let _ = writeln!(out, "idle probability e^(-lambda) = {idle:.5} ({idle})");
            let _ = writeln!(out, "random-choice utilization 1 - e^(-lambda) = {used:.5} ({used})");
        }
        TheoryQuery::Recursion { horizon } => {
            let trace = strategy1_recursion(horizon)?;
            out.push_str("t,g,f,theta\n");
            for s in &trace.steps {
                let _ = writeln!(out, "{},{},{},{}", s.t, s.g, s.f, s.theta);
            }
        }
        TheoryQuery::Limit => {
            let (lo, hi) = strategy1_limit_interval();
            let _ = writeln!(out, "[{lo}, {hi}]");
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRun {
    pub verdict: Verdict,
    pub iterations: usize,
    pub converged: bool,
    pub distance_from_uniform: f64,
    /// Whether the run behaved as certified.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub n: usize,
    pub nonzeros: usize,
    pub verdict: Verdict,
    pub normalization_redundant: bool,
    pub components: usize,
    pub closed_components: Vec<ComponentReport>,
    pub periodic_components: Vec<ComponentReport>,
    pub reasons: Vec<String>,
    pub start: String,
    pub empirical: EmpiricalRun,
}

pub struct MixingOptions<'a> {
    pub start: Option<&'a Path>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

/// Certifies the weight matrix in `w_path` and cross-checks the verdict by
/// iterating from the given (or a seeded random) start vector.
pub fn cmd_mixing(w_path: &Path, opts: &MixingOptions<'_>) -> Result<MixingReport, CliError> {
    let w = parse_weight_matrix(&read(w_path)?)?;
    let report = certify_uniform_consensus(&w)?;
    let (p0, start) = match opts.start {
        Some(path) => {
            let p = parse_strategy_vector(&read(path)?)?;
            if p.n() != w.n() {
                return Err(CliError::Core(kpr_core::Error::DimensionMismatch {
                    expected: w.n(),
                    found: p.n(),
                }));
            }
            (p, path.display().to_string())
        }
        None => {
            let mut rng = RngStream::new(opts.seed, 0);
            (
                FlatStrategyVector::random(w.n(), &mut rng)?,
                format!("random (seed {})", opts.seed),
            )
        }
    };
    let (seen, out) = empirical_verdict(&w, &p0, opts.tol, opts.max_iter)?;
    Ok(MixingReport {
        n: w.n(),
        nonzeros: w.nnz(),
        verdict: report.verdict,
        normalization_redundant: report.normalization_redundant,
        components: report.components.len(),
        closed_components: report.closed_components().cloned().collect(),
        periodic_components: report.periodic_components().cloned().collect(),
        reasons: report.reasons,
        start,
        empirical: EmpiricalRun {
            verdict: seen,
            iterations: out.iterations,
            converged: out.converged,
            distance_from_uniform: out.p_final.distance_from_uniform(),
            agrees: seen == report.verdict,
        },
    })
}
