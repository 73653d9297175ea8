//! The `precis` command line.
//!
//! Every subcommand writes only inside `--out-dir` and leaves a
//! `manifest.json` recording its full parameter set and input digests.
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure,
//! 4 non-convergence (outputs are still written).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::PrecisError;
use crate::simgen::{HubStyle, Structure};

pub use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "precis", version, about = "Sparse Gaussian graphical models under measurement error")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a ground truth, a clean sample and its contaminated copy.
    Simulate(SimulateArgs),
    /// Fit a precision matrix, naively or with measurement-error correction.
    Fit(FitArgs),
    /// BIC grid search over (v0, v1).
    Tune(TuneArgs),
    /// Score an estimate against a known precision matrix.
    Evaluate(EvaluateArgs),
    /// Standardize expression data, filter features and estimate error variances.
    Prep(PrepArgs),
    /// Run a grid of simulation cells described by a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Naive,
    Corrected,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub structure: StructureArg,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub group_size: usize,
    #[arg(long, value_enum, default_value_t = HubStyleArg::Star)]
    pub hub_style: HubStyleArg,
    /// Random graphs only; defaults to 3/d.
    #[arg(long)]
    pub edge_probability: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureArg {
    Hub,
    Random,
}

impl From<StructureArg> for Structure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::Hub => Structure::Hub,
            StructureArg::Random => Structure::Random,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HubStyleArg {
    Star,
    Block,
}

impl From<HubStyleArg> for HubStyle {
    fn from(s: HubStyleArg) -> Self {
        match s {
            HubStyleArg::Star => HubStyle::Star,
            HubStyleArg::Block => HubStyle::Block,
        }
    }
}

/// Spike-and-slab settings shared by `fit` and `tune`.
#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PriorArgs {
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long = "B", default_value_t = crate::model::BagusHyperparams::DEFAULT_B)]
    #[serde(rename = "B")]
    pub b: f64,
    #[arg(long, default_value_t = crate::model::BagusHyperparams::DEFAULT_EM_TOL)]
    pub em_tol: f64,
    #[arg(long, default_value_t = crate::model::BagusHyperparams::DEFAULT_EM_MAX_ITER)]
    pub em_max_iter: usize,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IroArgs {
    #[arg(long, default_value_t = crate::iro::IroConfig::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = crate::iro::IroConfig::DEFAULT_BURN_IN)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FitArgs {
    /// Observations, one row per subject; an optional header row is skipped.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: FitMethod,
    /// Error variances (one row or one column); required for `corrected`.
    #[arg(long)]
    pub sigma_u: Option<PathBuf>,
    #[arg(long)]
    pub v0: f64,
    #[arg(long)]
    pub v1: f64,
    /// Diagonal prior rate; defaults to v0.
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub iro: IroArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: FitMethod,
    #[arg(long)]
    pub sigma_u: Option<PathBuf>,
    /// Comma-separated v0 values; with --v1-grid, replaces the default grid.
    #[arg(long, value_delimiter = ',')]
    pub v0_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub v1_grid: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub iro: IroArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluateArgs {
    /// Estimated precision matrix.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Inclusion probabilities used for selection and AUC.
    #[arg(long)]
    pub inclusion: PathBuf,
    /// True precision matrix; its off-diagonal support is the true graph.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrepArgs {
    /// Per-subject expression means with a header row of feature labels.
    #[arg(long)]
    pub means: PathBuf,
    /// Posterior variances of the means, same layout.
    #[arg(long)]
    pub variances: PathBuf,
    /// Raw intensities, same layout; needed unless --no-intensity-filter.
    #[arg(long)]
    pub intensities: Option<PathBuf>,
    #[arg(long)]
    pub no_intensity_filter: bool,
    #[arg(long, default_value_t = 0.25)]
    pub min_fraction: f64,
    #[arg(long, default_value_t = 100.0)]
    pub min_intensity: f64,
    #[arg(long, default_value_t = 0.6)]
    pub min_iqr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub max_noise_ratio: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentArgs {
    /// JSON file listing the cells to run.
    #[arg(long)]
    pub config: PathBuf,
    /// Also write W, X and the true precision of every replicate.
    #[arg(long)]
    pub dump_replicates: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Outcome of a subcommand that ran to the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
}

pub fn exit_code(err: &PrecisError) -> u8 {
    match err {
        PrecisError::NonConvergence { .. } => 4,
        e if e.is_numerical() => 3,
        PrecisError::EmptyAverage | PrecisError::AllCellsFailed => 3,
        _ => 2,
    }
}

fn init_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("PRECIS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("PRECIS_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<Status, PrecisError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Prep(a) => commands::prep(a),
        Command::Experiment(a) => commands::experiment(a),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: EM hit its iteration cap; outputs were written and flagged");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
