//! `mmn-predict`: densities, draws, posteriors and KL risk sweeps for mean
//! mixtures of normals.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; falls back to the config, then to MMN_PREDICT_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replicates or number of draws.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Worker threads for risk sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file, or output directory for `risk-sweep`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Parser)]
#[command(
    name = "mmn-predict",
    version,
    about = "Predictive densities and KL risk for mean mixtures of normals"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-density of a predictive density on a product grid of y values.
    Density {
        /// Estimator kind (`mre`, `harmonic_bayes`, ...) or a JSON object.
        #[arg(long)]
        estimator: String,
        /// Observation, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// `lo:hi:step`, applied to every coordinate.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// Draws from the X model at `theta`, or from a predictive density.
    Sample {
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
    },
    /// Posterior of θ under the configured prior.
    Posterior {
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Exact constant KL risk of the minimum risk equivariant density.
    MreRisk,
    /// Paired Monte Carlo KL risks over the configured t grid.
    RiskSweep,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Density { estimator, x, grid } => commands::density(common, estimator, x, grid),
        Command::Sample { estimator, x } => {
            commands::sample(common, estimator.as_deref(), x.as_deref())
        }
        Command::Posterior { x } => commands::posterior(common, x),
        Command::MreRisk => commands::mre_risk(common),
        Command::RiskSweep => commands::risk_sweep(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmn-predict: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
