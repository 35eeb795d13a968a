//! `sepfda` command-line tool.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 on a
//! numerical failure.

mod commands;
mod io;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{DistanceArgs, EvaluateArgs, FitArgs, FpcaArgs, ShapleyArgs, SimulateArgs, SmoothArgs};

const THREADS_VAR: &str = "SEPFDA_THREADS";

/// Prints library warnings to stderr.
struct StderrLog;

impl log::Log for StderrLog {
    fn enabled(&self, meta: &log::Metadata) -> bool {
        meta.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().as_str().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLog = StderrLog;

#[derive(Debug, Parser)]
#[command(name = "sepfda", version, about = "Robust separable covariance estimation for multivariate functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project curves onto a B-spline basis.
    Smooth(SmoothArgs),
    /// Estimate mean and separable covariance, then distances and flags.
    Fit(FitArgs),
    /// Squared functional distances of curves under a stored fit.
    Distance(DistanceArgs),
    /// Time-by-coordinate Shapley contributions to the squared distance.
    Shapley(ShapleyArgs),
    /// Separable functional principal components of a stored fit.
    Fpca(FpcaArgs),
    /// Draw synthetic curves, optionally contaminated.
    Simulate(SimulateArgs),
    /// Compare a fit against simulation ground truth.
    Evaluate(EvaluateArgs),
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().with_context(|| format!("{THREADS_VAR} must be a non-negative integer, found {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .with_context(|| format!("cannot configure {n} worker threads"))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Smooth(a) => commands::smooth_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a),
        Command::Distance(a) => commands::distance_cmd(a),
        Command::Shapley(a) => commands::shapley_cmd(a),
        Command::Fpca(a) => commands::fpca_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(|c| c.downcast_ref::<sepfda::Error>()).map_or(2, |e| if e.is_validation() { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
