//! Command-line front end: configuration, experiment orchestration and
//! reproducible output files.

pub mod commands;
pub mod config;
pub mod output;
pub mod replay;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{Outcome, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cascade_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cascade-lab", version, about = "Null-control experiments for cascade PDE systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write trajectory.csv with every k-th time level.
    #[arg(long, value_name = "K")]
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Ray-tracing check of the geometric control condition.
    Gcc(RunArgs),
    /// Coercivity, coupling bounds and admissibility ratios.
    Check(RunArgs),
    /// HUM control synthesis with re-simulation.
    Control(RunArgs),
    /// Filtered observability constants.
    Observability(RunArgs),
    /// Modal Kalman rank test (constant global couplings only).
    Kalman(RunArgs),
    /// Penalized HUM over a decreasing list of ε.
    SweepEps(RunArgs),
    /// Re-simulate a stored control run and compare terminal energies.
    Replay {
        /// Output directory of a previous `control` or `sweep-eps` run.
        dir: PathBuf,
    },
    /// Heat 2-cascade with disjoint coupling and control regions.
    Demo {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_name = "K")]
        snapshots: Option<usize>,
    },
}

/// Caps rayon's pool at `CASCADE_LAB_THREADS` when set.
fn init_threads() {
    if let Some(n) = std::env::var("CASCADE_LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        // A pool that already exists (e.g. in tests) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the command line and returns the process exit code:
/// 0 pass, 2 verdict fail, 1 usage or configuration error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match commands::execute(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            match outcome.verdict {
                Verdict::Pass => 0,
                Verdict::Fail => 2,
            }
        }
        Err(e) => {
            eprintln!("cascade-lab: {e}");
            1
        }
    }
}
