//! Batch front-end: loads a TOML job config and runs one of the pipeline
//! commands, writing CSV tables and JSON documents that are byte-identical
//! across runs with the same config and seeds.

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;
use runner::{OutputPlan, RunError};

#[derive(Parser)]
#[command(
    name = "cvqpt",
    version,
    about = "Selective continuous-variable process reconstruction, in simulation",
    after_help = "Exit codes: 0 success, 1 invalid configuration, 2 numerical failure, \
                  3 non-convergence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Job configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's `[output] dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for mesh scans and grid builds (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Turn warnings (per-point scan failures, Hermitian-defect breaches)
    /// into errors.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct the kernel at a single point.
    Estimate,
    /// Reconstruct the kernel over a mesh and tabulate the results.
    Scan,
    /// Bound the reconstruction fidelity through the channel's dual state.
    ChoiCompare,
    /// Re-simulate one point's finite-shot readout across many seeds.
    ShotStudy,
    /// List the built-in kernels.
    Kernels,
}

fn dispatch(cli: &Cli) -> Result<(), RunError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(RunError::Validation("--threads: must be at least 1".into()));
        }
        // Ignore the error if a pool already exists (e.g. repeated dispatch
        // in tests); scans are deterministic regardless of thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if matches!(cli.command, Command::Kernels) {
        runner::list_kernels();
        return Ok(());
    }
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| RunError::Validation("--config PATH is required".into()))?;
    let config = FileConfig::load(config_path)?;
    let out = OutputPlan::new(&config, cli.out.as_deref());
    match cli.command {
        Command::Estimate => runner::run_estimate(&config, &out, cli.strict),
        Command::Scan => runner::run_scan(&config, &out, cli.strict),
        Command::ChoiCompare => runner::run_choi_compare(&config, &out, cli.strict),
        Command::ShotStudy => runner::run_shot_study(&config, &out, cli.strict),
        Command::Kernels => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
