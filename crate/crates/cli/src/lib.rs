//! Command-line front end for `kpr-core`: configuration files, subcommands
//! and deterministic output files.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use kpr_core::runner::SweepParameter;

pub use commands::{cmd_mixing, cmd_run, cmd_sweep, cmd_theory, MixingOptions, TheoryQuery};
pub use config::{load_config, FileConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kpr_core::Error),
    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Format(String),
}

impl CliError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input (config, parameters, preconditions), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use kpr_core::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(
                E::Config { .. }
                | E::InvalidParameter { .. }
                | E::Precondition(_)
                | E::Parse { .. }
                | E::MalformedRow { .. }
                | E::InvalidSize(_)
                | E::DimensionMismatch { .. },
            ) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kpr", version, about = "Client/server matching simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured population; writes timeseries.csv,
    /// summary.json and manifest.json.
    Run {
        config: PathBuf,
        #[arg(long, env = "KPR_OUTPUT_DIR", default_value = "kpr-output")]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Steady-state metrics for each value of one parameter; writes
    /// sweep.csv and manifest.json.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepArg,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, env = "KPR_OUTPUT_DIR", default_value = "kpr-output")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form reference values.
    Theory {
        #[command(subcommand)]
        query: TheoryArg,
    },
    /// Certify a weight matrix and check the verdict by iterating.
    Mixing {
        /// Sparse weight matrix: header `N`, then `row col value` lines.
        weights: PathBuf,
        /// Start vector: header `N`, then the N^2 entries client-major.
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long, default_value_t = kpr_core::mixing::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = kpr_core::mixing::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Seed for the random start vector when `--start` is absent.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    GroupSplit,
    Step,
    Fraction,
    Multiplier,
}

impl From<SweepArg> for SweepParameter {
    fn from(a: SweepArg) -> Self {
        match a {
            SweepArg::GroupSplit => SweepParameter::GroupSplit,
            SweepArg::Step => SweepParameter::Step,
            SweepArg::Fraction => SweepParameter::Fraction,
            SweepArg::Multiplier => SweepParameter::Multiplier,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum TheoryArg {
    /// Idle probability and random-choice utilization at load lambda.
    Poisson {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Strategy 1 utilization/stability recursion as CSV.
    Recursion {
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Limiting utilization interval for Strategy 1.
    Limit,
}

fn execute(cli: Cli, stdout: &mut impl Write) -> Result<(), CliError> {
    let emit = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e))
    };
    match cli.command {
        Command::Run { config, out, seed } => {
            let m = cmd_run(&config, &out, seed)?;
            let files: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
            emit(stdout, &format!("wrote {} and manifest.json to {}\n", files.join(", "), out.display()))
        }
        Command::Sweep { config, param, values, out, seed } => {
            cmd_sweep(&config, param.into(), &values, &out, seed)?;
            emit(stdout, &format!("wrote sweep.csv and manifest.json to {}\n", out.display()))
        }
        Command::Theory { query } => {
            let (q, csv) = match query {
                TheoryArg::Poisson { lambda } => (TheoryQuery::Poisson { lambda }, None),
                TheoryArg::Recursion { horizon, csv } => (TheoryQuery::Recursion { horizon }, csv),
                TheoryArg::Limit => (TheoryQuery::Limit, None),
            };
            let text = cmd_theory(&q)?;
            match csv {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
                    emit(stdout, &format!("wrote {}\n", path.display()))
                }
                None => emit(stdout, &text),
            }
        }
        Command::Mixing { weights, start, tol, max_iter, seed } => {
            let opts = MixingOptions {
                start: start.as_deref(),
                tol,
                max_iter,
                seed,
            };
            let report = cmd_mixing(&weights, &opts)?;
            let mut text =
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Format(e.to_string()))?;
            text.push('\n');
            emit(stdout, &text)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kpr: {e}");
            e.exit_code()
        }
    }
}
