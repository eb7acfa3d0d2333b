use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisy_consensus::sweep::NodeVariance;

#[derive(Debug, Parser)]
#[command(name = "noisy-consensus", version, about = "Steady-state disagreement of noisy consensus on graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chain quantities and steady-state disagreement for one graph or matrix.
    Analyze(AnalyzeArgs),
    /// Disagreement of lazy walks over a list of sizes, as CSV.
    Sweep(SweepArgs),
    /// Monte Carlo run of the noisy consensus recursion.
    Simulate(SimulateArgs),
    /// Exact and simulated performance of noisy formation control.
    Formation(FormationArgs),
    /// Runs the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// complete, line, ring, star, two-star, starry-line, gridD, tree,
    /// erdos-renyi, random-regular or custom
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability for erdos-renyi.
    #[arg(long)]
    pub p: Option<f64>,
    /// Degree for random-regular.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Edge-list file for custom (first line n, then `i j` per line).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    /// Noise variance on every node.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// File with one variance per node.
    #[arg(long)]
    pub sigma2_vec: Option<PathBuf>,
    /// Per-node override `i=s`; negative `i` counts from the end.
    #[arg(long = "sigma2-node", value_name = "I=S")]
    pub sigma2_node: Vec<NodeVariance>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Walk {
    Lazy,
    Simple,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Row-stochastic matrix as CSV instead of a graph walk.
    #[arg(long, conflicts_with = "family")]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Walk::Lazy)]
    pub walk: Walk,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Full noise covariance as CSV; overrides the variance flags.
    #[arg(long)]
    pub covariance: Option<PathBuf>,
    /// Largest n for which the covariance-recursion oracle runs.
    #[arg(long, default_value_t = 64)]
    pub oracle_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Comma-separated sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 5000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Steps to discard, or `auto`.
    #[arg(long, default_value = "auto")]
    pub burn_in: String,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    #[arg(long, value_enum, default_value_t = Distribution::Gaussian)]
    pub distribution: Distribution,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = Walk::Lazy)]
    pub walk: Walk,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Trace CSV (`t,delta_hat,delta_uni_hat,stderr`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON; printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FormationArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Formation spec as JSON instead of a built-in family.
    #[arg(long, conflicts_with = "family")]
    pub spec: Option<PathBuf>,
    /// The four-node ring demo.
    #[arg(long, conflicts_with_all = ["family", "spec"])]
    pub demo: bool,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Noise standard deviation per coordinate.
    #[arg(long, conflicts_with = "lambda2")]
    pub lambda: Option<f64>,
    /// Noise variance per coordinate.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Trajectory CSV (`t,node,x1..xd`) of the first trial.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Only the closed form; no simulation.
    #[arg(long)]
    pub exact_only: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
