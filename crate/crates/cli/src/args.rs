use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rfmatch", version, about = "Likelihood-free estimation by matching random Fourier features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate parameters from an observed series.
    Estimate(EstimateArgs),
    /// Run a replicated experiment from a plan file.
    Experiment(ExperimentArgs),
    /// Simulated feature means along a parameter grid.
    Sweep(SweepArgs),
    /// Simulation-based test of a point null.
    Test(TestArgs),
    /// Goodness of fit on held-out features.
    Gof(GofArgs),
    /// Numerical embedding diagnostic over a parameter grid.
    Diagnose(DiagnoseArgs),
    /// Simulate a series from a model.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Mle,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Distance,
    /// Two-step: distance pilot, then inverse-variance weights.
    Weighted,
    Wood,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// gaussian-location, t-location, logistic-map or noisy-logistic.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Discarded map iterations before recording (logistic models).
    #[arg(long, default_value_t = 0)]
    pub burn_in: usize,
    /// Degrees of freedom of the t-location model.
    #[arg(long, default_value_t = 5.0)]
    pub t_df: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BankArgs {
    /// Number of features; defaults to 2d+1.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub arity: usize,
    #[arg(long, default_value_t = 1.0)]
    pub freq_scale: f64,
    /// Feature bank JSON; overrides the bank drawn from the seed.
    #[arg(long)]
    pub bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ObjectiveArgs {
    #[arg(long, value_enum, default_value_t = Objective::Distance)]
    pub objective: Objective,
    /// Simulations per parameter value.
    #[arg(long, default_value_t = 10)]
    pub s: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub crn: Switch,
    #[arg(long, default_value_t = 1e-8)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 10_000)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub polish: Switch,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Single-column CSV of the observed series.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Baseline::None)]
    pub baseline: Baseline,
    /// Add a sandwich covariance at the estimate.
    #[arg(long)]
    pub sandwich: bool,
    /// Add a parametric bootstrap with this many replicates.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Output directory; overrides `output` in the plan.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Per-dimension `lo:hi:count`, comma-separated.
    #[arg(long)]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub s: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Null parameter value, comma-separated.
    #[arg(long)]
    pub theta0: String,
    /// Null simulations.
    #[arg(long = "B", default_value_t = 99)]
    pub b: usize,
}

#[derive(Debug, Args)]
pub struct GofArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Fitted value; estimated from the data when omitted.
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long = "B", default_value_t = 99)]
    pub b: usize,
    /// Held-out bank JSON; drawn from the seed when omitted.
    #[arg(long)]
    pub holdout_bank: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Per-dimension `lo:hi:count`, comma-separated.
    #[arg(long)]
    pub grid: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub s_big: usize,
    /// Minimum separation ratio and minimum singular value.
    #[arg(long, default_value = "1e-3,1e-3")]
    pub thresholds: String,
    /// Omit per-point feature values from the report.
    #[arg(long)]
    pub brief: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub true_theta: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
