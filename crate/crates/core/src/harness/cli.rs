//! Command line: `run`, `baseline` and `metrics`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::{Error, Result};

use super::config::{ExperimentConfig, Mode};
use super::experiment::execute;
use super::output::{
    metrics_csv, metrics_from_eval_csv, write_atomic, write_run, EVAL_CSV, METRICS_CSV,
};

/// Environment variable holding the log filter, e.g. `ABPS_LOG=info`.
pub const LOG_ENV: &str = "ABPS_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "abps",
    version,
    about = "Adaptive behavior policy sharing experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a pool as configured and write the CSV outputs.
    Run(RunArgs),
    /// Train every agent independently (same as `run --mode independent-baseline`).
    Baseline(BaselineArgs),
    /// Recompute pool metrics from the eval.csv in a results directory.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides the config's mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Results directory holding eval.csv; metrics.csv is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

fn train(common: &CommonArgs, mode: Option<Mode>) -> Result<PathBuf> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(mode) = mode {
        config.mode = mode;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| {
            Error::config("no output directory: pass --out or set `out` in the config")
        })?;
    config.out = Some(out.clone());
    config.validate()?;
    log::info!(
        "{} run: seed {}, {} training steps",
        config.mode.as_str(),
        config.seed,
        config.abps.total_env_steps
    );
    let artifacts = execute(&config)?;
    log::info!(
        "done: {} training interactions, {} evaluation steps",
        artifacts.log.total_interactions,
        artifacts.log.eval_env_steps
    );
    write_run(&out, &artifacts)?;
    Ok(out)
}

fn metrics(dir: &Path) -> Result<()> {
    let records = metrics_from_eval_csv(&dir.join(EVAL_CSV))?;
    write_atomic(dir, METRICS_CSV, &metrics_csv(&records)?)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let out = train(&args.common, args.mode)?;
            log::info!("outputs in {}", out.display());
        }
        Command::Baseline(args) => {
            let out = train(&args.common, Some(Mode::IndependentBaseline))?;
            log::info!("outputs in {}", out.display());
        }
        Command::Metrics(args) => metrics(&args.out)?,
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit status: 0 on success, 2 on usage errors, 1 otherwise.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}
