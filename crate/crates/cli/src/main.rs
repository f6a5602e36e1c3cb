//! `claimstate`: fit, update, predict, simulate, and evaluate dynamic count
//! regression models from the command line.

mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use claimstate_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "claimstate",
    version,
    about = "Dynamic claim-frequency models with time-varying coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select smoothing parameters and fit on training data.
    Fit(FitArgs),
    /// Absorb later batches into a snapshot.
    Update(UpdateArgs),
    /// Predict claim counts for new rows.
    Predict(PredictArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Score predictions against observed counts.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Snapshot output (overrides `output.snapshot`).
    #[arg(long)]
    pub out_snapshot: Option<PathBuf>,
    /// Coefficient band CSV (overrides `output.bands`).
    #[arg(long)]
    pub bands: Option<PathBuf>,
    /// Fit report (overrides `output.report`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Skip the smoothing search and use the document's `tau`.
    #[arg(long)]
    pub fix_tau: bool,
    /// Smoothing parameters, comma separated (overrides `tau`).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub prior_scale: Option<f64>,
    #[arg(long)]
    pub nb_alpha: Option<f64>,
    /// Stop after this batch, leaving later batches to `update`; the data
    /// must not extend past it.
    #[arg(long)]
    pub through_batch: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Args, Debug)]
pub struct UpdateArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Rows of the batches after the snapshot.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_snapshot: PathBuf,
    /// Re-select smoothing parameters on all data and refit.
    #[arg(long, requires = "all_data")]
    pub refresh_smoothing: bool,
    /// All accumulated rows (training and new), needed for a refresh.
    #[arg(long)]
    pub all_data: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Rolling,
    Multistep,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Predict every row from the state this many batches ahead.
    #[arg(long, conflicts_with = "mode", allow_negative_numbers = true)]
    pub horizon: Option<i64>,
    /// Without --horizon: one-step-ahead with re-filtering (rolling) or pure
    /// forecasts to each row's batch (multistep).
    #[arg(long, value_enum, default_value = "rolling")]
    pub mode: ModeArg,
    /// Largest count with a pmf column.
    #[arg(long, default_value_t = 10)]
    pub k_max: u64,
    /// Coefficient band CSV over the history and forecast span.
    #[arg(long)]
    pub bands: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SimFamilyArg {
    Poisson,
    Zip,
    Nb,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 20_240_501)]
    pub seed: u64,
    /// All rows, sorted by time.
    #[arg(long)]
    pub out: PathBuf,
    /// Training part (early rows).
    #[arg(long)]
    pub train_out: Option<PathBuf>,
    /// Test part (late rows).
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "poisson")]
    pub family: SimFamilyArg,
    /// Constant logit of the structural-zero probability (zip).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub zero_logit: f64,
    /// Dispersion (nb).
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub covariate_low: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub covariate_high: f64,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Prediction CSV written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Data file holding the observed counts.
    #[arg(long)]
    pub data: PathBuf,
    /// Metric report.
    #[arg(long)]
    pub out: PathBuf,
    /// Baseline prediction CSV for double-lift data.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub lift_out: Option<PathBuf>,
    #[arg(long, requires = "baseline")]
    pub double_lift_out: Option<PathBuf>,
    /// Name of the count column in --data.
    #[arg(long, default_value = "y")]
    pub count_column: String,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::Data { .. }
        | Error::Parse(_)
        | Error::Sequencing(_)
        | Error::Version { .. }
        | Error::Io(_) => 3,
        Error::Convergence { .. }
        | Error::Numeric { .. }
        | Error::Selection(_)
        | Error::Metric(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Update(a) => commands::update(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}
