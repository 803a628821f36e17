mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CalibrationTarget, ConfigError, Family, GridMode};
use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "seqdesign",
    version,
    about = "Group-sequential trial design: boundaries, calibration, simulation and decisions"
)]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ScheduleArgs {
    /// Number of equally spaced analyses.
    #[arg(long = "k", visible_alias = "K")]
    pub k: Option<usize>,
    /// Maximum sample size.
    #[arg(long)]
    pub nmax: Option<u64>,
    /// Explicit cumulative sample sizes, e.g. 200,300,400.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<u64>>,
    /// Outcome standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct PriorArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub prior_mean: Option<f64>,
    /// Prior SD of the effect.
    #[arg(long, visible_alias = "nu")]
    pub prior_sd: Option<f64>,
    /// Use the flat (improper) prior.
    #[arg(long, conflicts_with = "prior_sd")]
    pub flat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpendingArg {
    LogE,
    ObfLike,
    Power,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stopping boundaries on the z-scale.
    Boundaries {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Posterior or predictive probability threshold.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum)]
        spending: Option<SpendingArg>,
        /// Exponent of power spending.
        #[arg(long)]
        power_b: Option<f64>,
        #[arg(long)]
        xi0: Option<f64>,
        #[arg(long)]
        xi1: Option<f64>,
        /// Every design family, each calibrated to `alpha` where applicable.
        #[arg(long, conflicts_with = "family")]
        all: bool,
    },
    /// Solve a design parameter for a type I error target.
    Calibrate {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, value_enum)]
        target: Option<CalibrationTarget>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        xi0: Option<f64>,
    },
    /// Monte Carlo operating characteristics of posterior-probability designs.
    OcSim {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        prior: PriorArgs,
        /// Run a predefined scenario grid.
        #[arg(long, value_enum)]
        grid: Option<GridMode>,
        /// Required.
        #[arg(long)]
        seed: Option<u64>,
        /// Trials per scenario.
        #[arg(short = 'S', long)]
        trials: Option<usize>,
        /// SD of the generative effect distribution.
        #[arg(long)]
        nu0: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu0: Option<f64>,
        /// Fixed true effect for every trial.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "nu0")]
        theta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Emit one row per simulated trial.
        #[arg(long)]
        records: bool,
        /// Table-shaped CSV for grid runs: one row per (nu0, K).
        #[arg(long)]
        wide: bool,
        /// Worker threads; output does not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Optimal decision of the decision-theoretic design.
    Decide {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        xi0: Option<f64>,
        /// False-rejection loss; one value or one per analysis.
        #[arg(long, value_delimiter = ',')]
        xi1: Option<Vec<f64>>,
        #[arg(long)]
        patient_cost: Option<f64>,
        /// 1-based analysis.
        #[arg(long)]
        analysis: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Emit the stop and continue risk curves instead.
        #[arg(long)]
        curves: bool,
    },
    /// Posterior summary at the end of a trial.
    Report {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, allow_hyphen_values = true)]
        ybar: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Declared number of analyses; does not affect the posterior.
        #[arg(long = "k", visible_alias = "K")]
        k: Option<usize>,
        #[arg(long)]
        stop_analysis: Option<usize>,
        /// Credible intervals at level 1 - alpha.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use seqdesign::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NoSignChange { .. } | E::NoConvergence { .. } | E::NotMonotone => 3,
                E::InfeasibleTarget { .. } | E::InfeasibleSpend { .. } => 4,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
