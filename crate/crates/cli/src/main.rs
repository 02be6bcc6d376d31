//! `latnet`: simulations, sweeps and capacity queries from scenario files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 invariant breach during a
//! run, 4 infeasible point in `capacity --require-feasible`.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    cmd_capacity, cmd_run, cmd_sweep, cmd_validate, parse_lifetimes, parse_list, prepare,
    CapacityParams, Overrides, RunParams, Source, SweepParams,
};
use error::CliError;

const DEFAULT_OUT_DIR: &str = "latnet-out";

#[derive(Parser)]
#[command(
    name = "latnet",
    version,
    about = "Deadline-constrained network control experiments"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "LATNET_OUT_DIR", default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes metrics.csv, summary.csv and run.manifest.json.
    Run {
        #[arg(long, required_unless_present = "manifest")]
        scenario: Option<PathBuf>,
        /// Replay a previous run from its manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Convergence gap as a fraction of the total arrival rate.
        #[arg(long, default_value_t = 0.005)]
        epsilon: f64,
        /// Keep every n-th slot in metrics.csv.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Capacity boundary θ* and min cost h* per lifetime; writes capacity.csv.
    Capacity {
        #[arg(long, required_unless_present = "manifest")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Lifetimes as `a..b` or a comma list.
        #[arg(long, required_unless_present = "manifest")]
        lifetimes: Option<String>,
        /// Rate multipliers at which h* is reported.
        #[arg(long, default_value = "1")]
        scales: String,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Exit with code 4 when any requested point is infeasible.
        #[arg(long)]
        require_feasible: bool,
    },
    /// One run per (policy, value, replication); writes sweep.csv and sweep_summary.csv.
    Sweep {
        #[arg(long, required_unless_present = "manifest")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// lambda (per-client Mbps), V or L.
        #[arg(long, required_unless_present = "manifest")]
        axis: Option<String>,
        /// Comma list of axis values.
        #[arg(long, required_unless_present = "manifest")]
        values: Option<String>,
        /// Comma list of policies.
        #[arg(long, default_value = "proposed")]
        policies: String,
        #[arg(long, default_value_t = 1)]
        replications: u64,
        #[arg(long, default_value_t = 0.005)]
        epsilon: f64,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a scenario file and report its size.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn split_policies(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out = cli.out;
    let written = match cli.command {
        Command::Run {
            scenario,
            manifest,
            overrides,
            replication,
            epsilon,
            stride,
        } => {
            let src = Source {
                scenario: scenario.as_deref(),
                manifest: manifest.as_deref(),
                overrides: &overrides,
            };
            let params = RunParams {
                replication,
                epsilon,
                stride,
            };
            cmd_run(prepare("run", src, params)?, out)?
        }
        Command::Capacity {
            scenario,
            manifest,
            overrides,
            lifetimes,
            scales,
            tolerance,
            require_feasible,
        } => {
            let src = Source {
                scenario: scenario.as_deref(),
                manifest: manifest.as_deref(),
                overrides: &overrides,
            };
            let params = CapacityParams {
                lifetimes: parse_lifetimes(&lifetimes.unwrap_or_default())
                    .map_err(CliError::Config)?,
                scales: parse_list(&scales).map_err(CliError::Config)?,
                tolerance,
                require_feasible,
            };
            cmd_capacity(prepare("capacity", src, params)?, out)?
        }
        Command::Sweep {
            scenario,
            manifest,
            overrides,
            axis,
            values,
            policies,
            replications,
            epsilon,
            jobs,
        } => {
            let src = Source {
                scenario: scenario.as_deref(),
                manifest: manifest.as_deref(),
                overrides: &overrides,
            };
            let params = SweepParams {
                axis: axis.unwrap_or_default(),
                values: parse_list(&values.unwrap_or_default()).map_err(CliError::Config)?,
                policies: split_policies(&policies),
                replications,
                epsilon,
            };
            cmd_sweep(prepare("sweep", src, params)?, jobs, out)?
        }
        Command::Validate { scenario } => {
            cmd_validate(&scenario)?;
            return Ok(());
        }
    };
    println!("manifest: {}", written.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
