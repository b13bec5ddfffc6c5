//! Batch experiment surface behind the `macrodim` binary.
//!
//! ```text
//! macrodim <percolate|dim-perc|walk-range|sandwich|kolmogorov|green|capacity|verify>
//!          --config <path> [--seed N] [--out DIR] [--filter TAG]
//! ```
//!
//! Every command writes `<command>.json`, a plain-text table `<command>.txt`,
//! `timings.json` and its own artifacts. Exit status is 0 when every judged
//! record passes, 1 when one fails and 2 on configuration or input errors.

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::capacity::CapacityError;
use crate::dimension::DimensionError;
use crate::percolation::PercolationError;
use crate::walk::WalkError;

pub use config::{ExperimentConfig, LoadedConfig, Tolerances};
pub use report::{Artifact, CommandOutput, Measurement, Report, ResultRecord, Uncertainty};

/// The only environment override: the output directory.
pub const OUT_ENV: &str = "MACRODIM_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Percolate,
    DimPerc,
    WalkRange,
    Sandwich,
    Kolmogorov,
    Green,
    Capacity,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Percolate => "percolate",
            Command::DimPerc => "dim-perc",
            Command::WalkRange => "walk-range",
            Command::Sandwich => "sandwich",
            Command::Kolmogorov => "kolmogorov",
            Command::Green => "green",
            Command::Capacity => "capacity",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "macrodim", version, about = "Macroscopic fractal percolation, covering measures and Martin capacities")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; beats `MACRODIM_OUT` and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Runs only the verify criteria with this tag or id.
    #[arg(long)]
    pub filter: Option<String>,
}

/// Runs `command` on a config. No files are written.
pub fn execute(command: Command, loaded: &LoadedConfig) -> Result<CommandOutput, CliError> {
    let start = Instant::now();
    let mut out = match command {
        Command::Percolate => commands::cmd_percolate(loaded)?,
        Command::DimPerc => commands::cmd_dim_perc(loaded)?,
        Command::WalkRange => commands::cmd_walk_range(loaded)?,
        Command::Sandwich => commands::cmd_sandwich(loaded)?,
        Command::Kolmogorov => commands::cmd_kolmogorov(loaded)?,
        Command::Green => commands::cmd_green(loaded)?,
        Command::Capacity => commands::cmd_capacity(loaded)?,
        Command::Verify => return verify::cmd_verify(loaded),
    };
    out.timings.insert(command.name().into(), start.elapsed().as_secs_f64());
    Ok(out)
}

/// Applies the command-line overrides to a loaded config.
pub fn apply_overrides(loaded: &mut LoadedConfig, args: &Args) {
    if let Some(seed) = args.seed {
        loaded.config.seed = seed;
    }
    if let Some(f) = &args.filter {
        loaded.config.filter = Some(f.clone());
    }
}

/// `--out`, then `MACRODIM_OUT`, then the config, then `out`.
pub fn output_dir(args: &Args, config: &ExperimentConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes the report, the table, the timings and the artifacts.
pub fn write_output(dir: &std::path::Path, command: Command, out: &CommandOutput) -> Result<(), CliError> {
    let name = command.name();
    report::write_atomic(dir, &format!("{name}.json"), out.report.to_json().as_bytes())?;
    report::write_atomic(dir, &format!("{name}.txt"), out.report.table().as_bytes())?;
    for a in &out.artifacts {
        report::write_atomic(dir, &a.name, &a.bytes)?;
    }
    let mut t = serde_json::to_string_pretty(&out.timings).expect("timings serialize");
    t.push('\n');
    report::write_atomic(dir, "timings.json", t.as_bytes())
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&args) {
        Ok(out) => {
            print!("{}", out.report.table());
            i32::from(out.report.any_failed())
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Loads, runs and writes one command.
pub fn run(args: &Args) -> Result<CommandOutput, CliError> {
    let mut loaded = LoadedConfig::load(&args.config)?;
    apply_overrides(&mut loaded, args);
    let out = execute(args.command, &loaded)?;
    write_output(&output_dir(args, &loaded.config), args.command, &out)?;
    Ok(out)
}
