//! The `gfamp` command line.
//!
//! Exit status: 0 on success, 1 for configuration or I/O errors, 2 when a
//! numerical abort produced failed trials (or a `check` suite failed).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::Error;

use super::check::run_checks;
use super::output::write_table;
use super::run::{run_experiment_with_threads, Mode};
use super::spec::{load_spec, ExperimentSpec, Format};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "GFAMP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gfamp", version, about = "Activity detection and channel estimation for OFDM grant-free access")]
pub struct Cli {
    /// Override the master seed of the spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the number of trials per grid point.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads (default: $GFAMP_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; a `.summary` sibling receives the aggregates.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report raw final iterates instead of best tracked ones.
    #[arg(long, global = true)]
    pub no_tracking: bool,
    /// Record per-iteration wall time (makes output non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo simulation of a single operating point.
    Simulate { spec: PathBuf },
    /// Analytical state-evolution curves only.
    Se { spec: PathBuf },
    /// Monte Carlo simulation over the spec's sweep grid.
    Sweep { spec: PathBuf },
    /// Run the built-in oracle suites.
    Check,
}

impl Cli {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.base.master_seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(format) = self.format {
            spec.format = format;
        }
        if let Some(out) = &self.out {
            spec.output = Some(out.clone());
        }
        if self.no_tracking {
            spec.base.tracking_enabled = false;
        }
        if self.timing {
            spec.timing = true;
        }
    }

    fn threads(&self) -> usize {
        self.threads
            .or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok())
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Runs the parsed command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli) -> crate::Result<i32> {
    let (path, mode) = match &cli.command {
        Command::Check => {
            let reports = run_checks(cli.seed.unwrap_or(0));
            for r in &reports {
                println!("{r}");
            }
            return Ok(if reports.iter().all(|r| r.passed) { 0 } else { 2 });
        }
        Command::Simulate { spec } | Command::Sweep { spec } => (spec, Mode::All),
        Command::Se { spec } => (spec, Mode::AnalysisOnly),
    };
    let mut spec = load_spec(path)?;
    cli.apply(&mut spec);
    if matches!(cli.command, Command::Simulate { .. }) && !spec.sweep.is_empty() {
        return Err(Error::Config {
            key: "sweep".into(),
            message: "simulate runs a single point; use the sweep command".into(),
        });
    }
    if mode == Mode::AnalysisOnly {
        if let Some(p) = spec
            .points()?
            .into_iter()
            .find(|p| super::run::se_params(&p.cfg).is_none())
        {
            return Err(Error::Config {
                key: "distance_model".into(),
                message: format!("analytical curves need a constant distance (point {})", p.index),
            });
        }
        spec.algorithms = vec![super::spec::Algorithm::SeAnalysis];
    }
    spec.validate()?;
    let table = run_experiment_with_threads(&spec, mode, cli.threads())?;
    write_table(&table, spec.format, spec.output.as_deref())?;
    let failed = table.failed_trials();
    if failed > 0 {
        eprintln!("{failed} trial runs aborted numerically");
        return Ok(2);
    }
    Ok(0)
}
