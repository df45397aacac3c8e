//! `effcap`: runs the region, sum-rate, K-curve, power-control and queue
//! experiments and writes CSV, JSON and SVG files.
//!
//! Exit codes: 0 success, 1 partial (some points failed), 2 usage error,
//! 3 solver non-convergence.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use effcap::Strategy;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] effcap::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Core(effcap::Error::Usage(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Partial,
    NotConverged,
}

#[derive(Parser)]
#[command(
    name = "effcap",
    version,
    about = "Effective-capacity experiments for fading multiple-access channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo integration and the first queue run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TB product; replaces the power command's sweep.
    #[arg(long, global = true)]
    tb: Option<f64>,
    /// Comma-separated strategy labels.
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Effective-capacity region, one trace per strategy.
    Region,
    /// Sum rate against a common QoS exponent.
    Sumrate,
    /// Optimal partition constant K against the weight ratio.
    Kcurve,
    /// Power-control policy grids and solver reports.
    Power,
    /// Queue simulations checking the tail decay rate.
    Queue,
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let over = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        tb: cli.tb,
        strategies: cli.strategies.clone(),
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &over)?;
    let status = match cli.command {
        Command::Region => commands::region(&cfg)?,
        Command::Sumrate => commands::sumrate(&cfg)?,
        Command::Kcurve => commands::kcurve(&cfg)?,
        Command::Power => commands::power(&cfg)?,
        Command::Queue => commands::queue(&cfg)?,
    };
    Ok(match status {
        Status::Success => 0,
        Status::Partial => {
            eprintln!("warning: some points failed; see the metadata JSON");
            1
        }
        Status::NotConverged => {
            eprintln!("error: solver did not converge; see the metadata JSON");
            3
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
