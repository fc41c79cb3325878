//! Command-line front end for the gridge library.
//!
//! Five subcommands: `fit` (penalized fit at a fixed strength), `tune`
//! (data-driven strength selection), `simulate` (Monte Carlo study of
//! estimator configurations), `causal` (inverse propensity weighting with
//! a penalized propensity model), and `risk` (first-order risk curve and
//! improvement diagnostics).
//!
//! Exit codes: 0 success, 2 configuration or argument problems, 3 data
//! problems, 4 numerical failures.

mod commands;
mod config;
mod reports;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, or inconsistent settings.
    Config(String),
    /// Anything the library itself rejected.
    Lib(gridge::Error),
}

impl From<gridge::Error> for CliError {
    fn from(e: gridge::Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                gridge::Error::Data(_)
                | gridge::Error::Io(_)
                | gridge::Error::InvalidArgument(_)
                | gridge::Error::InvalidSpec(_)
                | gridge::Error::DegenerateFold(_) => 3,
                gridge::Error::SolverFailure(_)
                | gridge::Error::SingularMoment(_)
                | gridge::Error::InvalidWeighting(_) => 4,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gridge",
    version,
    about = "Generalized ridge estimation, tuning, and diagnostics"
)]
struct Cli {
    /// Worker threads for simulation studies (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit one model at a fixed penalty strength.
    Fit(FitArgs),
    /// Select the penalty strength on a grid and refit.
    Tune(TuneArgs),
    /// Run a Monte Carlo study of estimator configurations.
    Simulate(SimulateArgs),
    /// Inverse propensity weighted means and quantiles.
    Causal(CausalArgs),
    /// First-order risk curve and improvement diagnostics.
    Risk(RiskArgs),
}

#[derive(Args)]
pub struct FitArgs {
    /// TOML config file; flags override its `[fit]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with outcome `y` followed by covariate columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// multinomial-logit | binary-logit | poisson | gaussian
    #[arg(long)]
    pub family: Option<String>,
    /// Penalty strength (default 0: unpenalized).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// identity | hessian | covariate
    #[arg(long)]
    pub weighting: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TuneArgs {
    /// TOML config file; flags override its `[tune]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// multinomial-logit | binary-logit | poisson | gaussian
    #[arg(long)]
    pub family: Option<String>,
    /// sure | cv
    #[arg(long)]
    pub selector: Option<String>,
    /// identity | hessian | covariate
    #[arg(long)]
    pub weighting: Option<String>,
    /// Cross-validation folds (cv selector only).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Positive grid points; zero is always prepended.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Relative deviation bounding the default grid's upper end.
    #[arg(long)]
    pub r: Option<f64>,
    /// Seed for fold assignment (cv selector only).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the strength/risk curve as CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// TOML config file; its `[simulate]` section defines the study.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observations per replication.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Base seed; replication i uses base_seed XOR i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write one CSV row per replication and estimator.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CausalArgs {
    /// TOML config file; flags override its `[causal]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with outcome `y`, group `t`, then covariate columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Expected number of groups (validated against the data).
    #[arg(long)]
    pub groups: Option<usize>,
    /// mle | fixed | sure | cv
    #[arg(long)]
    pub selector: Option<String>,
    /// Penalty strength (fixed selector only).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// identity | hessian | covariate
    #[arg(long)]
    pub weighting: Option<String>,
    /// Probability floor applied before weighting.
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Seed for fold assignment (cv selector only).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quantile levels, comma separated (default 0.25,0.5,0.75).
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<f64>,
    /// Write a log10 histogram of assigned propensities.
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    /// Write the selector's strength/risk curve as CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RiskArgs {
    /// TOML config file; flags override its `[risk]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// multinomial-logit | binary-logit | poisson | gaussian
    #[arg(long)]
    pub family: Option<String>,
    /// identity | hessian | covariate
    #[arg(long)]
    pub weighting: Option<String>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Strengths to evaluate, comma separated (default: standard grid).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Errors only if a pool already exists, which is fine for our use.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
