//! `spikesnr`: experiment runner for the pattern-detection toolkit.
//!
//! Each subcommand resolves its configuration (flags > `--config` file >
//! defaults), writes `manifest.json` into the output directory, then its
//! artifacts. Exit status: 0 success, 1 failed check, 2 config or I/O error.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{merge_overrides, read_flat, resolve};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "spikesnr", version, about = "Spike pattern detection: theory, simulation and STDP learning")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct GlobalArgs {
    /// Master seed
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Output directory [default: results/<command>]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jobs: Option<usize>,
    /// Flat `key = value` file
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compare simulated and analytic SNR over a grid of time constants
    Validate(ValidateArgs),
    /// Optimal strategy, time constant and window for one (f, T)
    Optimize(OptimizeArgs),
    /// Optimal parameters over the rate x jitter plane
    Map(MapArgs),
    /// One STDP learning run
    StdpRun(StdpRunArgs),
    /// Proportion of optimal learning runs over a threshold x w_out grid
    StdpSweep(StdpSweepArgs),
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_afferents: Option<usize>,
    /// Input rate, Hz
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    /// Pattern duration = window, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<f64>,
    /// Jitter half-width T, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patterns: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    presentations: Option<usize>,
    /// ms between onsets
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<f64>,
    /// Time bin, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    /// Comma-separated time constants, ms
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    taus: Option<Vec<f64>>,
    /// Comma-separated strategies
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    strategies: Option<Vec<u32>>,
    /// Relative tolerance of the agreement check
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    /// Dump the potential trace of the first pattern
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<bool>,
}

#[derive(Args, Serialize)]
struct OptimizeArgs {
    /// Input rate, Hz
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    /// Jitter half-width T, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_afferents: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_strategy: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_evaluations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

#[derive(Args, Serialize)]
struct MapArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    f_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    f_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    f_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_afferents: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_strategy: Option<u32>,
}

#[derive(Args, Serialize)]
struct LearningArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_afferents: Option<usize>,
    /// Input rate, Hz
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    /// Jitter half-width T, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<f64>,
    /// Membrane time constant, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    /// Time bin, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    /// Pattern duration L, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern_duration: Option<f64>,
    /// ms between onsets
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    presentations: Option<usize>,
    /// Presynaptic trace increment
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_increment: Option<f64>,
    /// Presynaptic trace time constant, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_tau: Option<f64>,
    /// Optimal window the learned one must match, ms
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<f64>,
    /// Relative margin on the window duration
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
}

#[derive(Args, Serialize)]
struct StdpRunArgs {
    #[command(flatten)]
    #[serde(flatten)]
    learning: LearningArgs,
    /// Threshold, in summed-weight units
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    /// Homeostatic term added at each postsynaptic spike (negative)
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    w_out: Option<f64>,
    /// Run index under the master seed
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<u64>,
    /// Store the weights every k presentations (0 disables)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_every: Option<usize>,
}

#[derive(Args, Serialize)]
struct StdpSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    learning: LearningArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    w_out_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    w_out_count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    /// Runs per cell
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
}

fn load<T, A>(global: &GlobalArgs, args: &A) -> Result<T, CliError>
where
    T: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let file = match &global.config {
        Some(path) => read_flat(path)?,
        None => BTreeMap::new(),
    };
    resolve(&file, &merge_overrides(global, args)?)
}

fn set_jobs(jobs: usize) -> Result<(), CliError> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate(a) => {
            let c: commands::ValidateConfig = load(g, a)?;
            set_jobs(c.common.jobs)?;
            commands::validate(&c)
        }
        Command::Optimize(a) => {
            let c: commands::OptimizeConfig = load(g, a)?;
            set_jobs(c.common.jobs)?;
            commands::optimize(&c)
        }
        Command::Map(a) => {
            let c: commands::MapConfig = load(g, a)?;
            set_jobs(c.common.jobs)?;
            commands::map(&c)
        }
        Command::StdpRun(a) => {
            let c: commands::StdpRunConfig = load(g, a)?;
            set_jobs(c.common.jobs)?;
            commands::stdp_run(&c)
        }
        Command::StdpSweep(a) => {
            let c: commands::StdpSweepConfig = load(g, a)?;
            set_jobs(c.common.jobs)?;
            commands::stdp_sweep(&c)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spikesnr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
