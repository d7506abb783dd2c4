//! Output files: CSV tables, JSON summaries and the run manifest.
//!
//! Numbers are written in Rust's shortest round-trip form, so parsing a CSV
//! back yields exactly the in-memory values.

use std::fs;
use std::path::{Path, PathBuf};

use kpr_core::runner::{SteadyState, SweepTable};
use kpr_core::{ExperimentConfig, TimeSeries};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// One parsed CSV row: leading key (slice or parameter value) and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Format(e.to_string())
}

fn write_table(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Format(e.to_string()))
}

pub fn parse_table(bytes: &[u8]) -> Result<CsvTable, CliError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| CliError::Format(format!("row {}: `{field}` is not a number", i + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

fn labels(ts: &TimeSeries) -> impl Iterator<Item = String> + '_ {
    ts.groups.iter().map(|g| g.label.clone())
}

pub fn timeseries_header(ts: &TimeSeries) -> Vec<String> {
    ["t", "utilization", "stability"]
        .into_iter()
        .map(String::from)
        .chain(labels(ts))
        .collect()
}

/// `t,utilization,stability,<group labels...>`, one row per recorded slice.
pub fn timeseries_csv(ts: &TimeSeries) -> Result<Vec<u8>, CliError> {
    let rows: Vec<Vec<String>> = (0..ts.slices.len())
        .map(|k| {
            let mut row = vec![
                ts.slices[k].to_string(),
                ts.utilization.mean[k].to_string(),
                ts.stability.mean[k].to_string(),
            ];
            row.extend(ts.group_rates.iter().map(|g| g.mean[k].to_string()));
            row
        })
        .collect();
    write_table(&timeseries_header(ts), &rows)
}

/// Expected parsed form of [`timeseries_csv`].
pub fn timeseries_table(ts: &TimeSeries) -> CsvTable {
    CsvTable {
        header: timeseries_header(ts),
        rows: (0..ts.slices.len())
            .map(|k| {
                let mut row = vec![
                    ts.slices[k] as f64,
                    ts.utilization.mean[k],
                    ts.stability.mean[k],
                ];
                row.extend(ts.group_rates.iter().map(|g| g.mean[k]));
                row
            })
            .collect(),
    }
}

/// `param,utilization,stability,<group labels...>`, one row per value.
pub fn sweep_csv(table: &SweepTable) -> Result<Vec<u8>, CliError> {
    write_table(&sweep_header(table), &sweep_rows(table)
        .iter()
        .map(|r| r.iter().map(f64::to_string).collect())
        .collect::<Vec<_>>())
}

fn sweep_header(table: &SweepTable) -> Vec<String> {
    ["param", "utilization", "stability"]
        .into_iter()
        .map(String::from)
        .chain(table.group_labels.iter().cloned())
        .collect()
}

fn sweep_rows(table: &SweepTable) -> Vec<Vec<f64>> {
    table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.value, r.utilization, r.stability];
            row.extend(&r.group_rates);
            row
        })
        .collect()
}

pub fn sweep_table(table: &SweepTable) -> CsvTable {
    CsvTable {
        header: sweep_header(table),
        rows: sweep_rows(table),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steady_state: SteadyState,
    pub final_utilization: f64,
    pub final_stability: f64,
    pub group_labels: Vec<String>,
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn new(ts: &TimeSeries, config: &ExperimentConfig) -> Self {
        Self {
            steady_state: ts.steady_state(),
            final_utilization: *ts.utilization.mean.last().unwrap_or(&0.0),
            final_stability: *ts.stability.mean.last().unwrap_or(&0.0),
            group_labels: ts.groups.iter().map(|g| g.label.clone()).collect(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRequest>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub parameter: String,
    pub values: Vec<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `dir/name`, reads the file back and checks it.
pub fn write_verified(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputRecord, CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    let back = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    if back != bytes {
        return Err(CliError::Format(format!("{} did not read back as written", path.display())));
    }
    Ok(OutputRecord {
        path: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&back),
    })
}

/// Recomputes every digest listed in the manifest stored in `dir`.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Format(e.to_string()))?;
    for out in &manifest.outputs {
        let p = dir.join(&out.path);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        if sha256_hex(&bytes) != out.sha256 || bytes.len() as u64 != out.bytes {
            return Err(CliError::Format(format!("digest mismatch for {}", p.display())));
        }
    }
    Ok(manifest)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}
