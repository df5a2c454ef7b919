use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "cachelearn", version, about = "Exact and simulated analysis of cache eviction policies")]
pub struct Cli {
    /// Worker threads; 1 gives the bit-exact reference mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Manifest path; defaults to `<output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic request trace.
    Gen(GenArgs),
    /// Replay requests through policies and report hit rates.
    Sim(SimArgs),
    /// Exact stationary analysis of one policy.
    Analyze(AnalyzeArgs),
    /// Empirical mixing time and mixing-time bounds.
    Mix(MixArgs),
    /// Learning-error curves over a time grid.
    LearnError(LearnArgs),
    /// Fit a Zipf exponent to a trace.
    Fit(FitArgs),
    /// Run an experiment described by a TOML file.
    Run(RunArgs),
    /// Re-execute the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// Popularity law: Zipf(`alpha`) over `n` items or explicit probabilities.
#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    /// Library size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Zipf exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Comma-separated non-increasing probabilities.
    #[arg(long, conflicts_with = "alpha")]
    pub probs: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Lines,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    FullShuffle,
    TopSwap,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Popularity reshuffle probability per request.
    #[arg(long)]
    pub modulate: Option<f64>,
    #[arg(long, value_enum, default_value = "full-shuffle")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "lines")]
    pub format: FormatArg,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Policy spec; repeat for several.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,
    /// Real cache size (implied by `lrum:` capacities).
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub dist: DistArgs,
    /// Replay a trace file instead of sampling.
    #[arg(long, conflicts_with_all = ["alpha", "probs"])]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lines")]
    pub format: FormatArg,
    /// Sample a modulated (popularity-shuffling) stream at this rate.
    #[arg(long)]
    pub modulate: Option<f64>,
    #[arg(long, value_enum, default_value = "full-shuffle")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub count: usize,
    #[arg(long = "burnin", default_value_t = 0)]
    pub burn_in: usize,
    /// Window length; defaults to the whole post-burn-in horizon.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate stationary hit probability with on-the-fly IRM sampling.
    #[arg(long)]
    pub mc: bool,
    /// Results CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value = "sim")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsArg {
    Default,
    Unit,
    Presence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhatArg {
    Stationary,
    Hit,
    Tau,
    Reversible,
    Kappa,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, value_enum, default_value = "default")]
    pub weights: WeightsArg,
    /// Quantities to report; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hit")]
    pub what: Vec<WhatArg>,
    /// Write the transition matrix as `row,col,prob`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Full-precision JSON report.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartsArg {
    All,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsArg {
    /// Congestion-based mixing bound from measured and analytic extremes.
    Congestion,
    /// Exponent of the polynomial bound under Zipf popularity.
    ZipfExponent,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, value_enum)]
    pub starts: Option<StartsArg>,
    #[arg(long, value_enum)]
    pub bounds: Option<BoundsArg>,
    /// Also report spectral gap, conductance and congestion.
    #[arg(long)]
    pub spectral: bool,
    /// Sup-TV trajectory CSV (`t,start_id,tv,sup_tv`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaArg {
    /// Each policy's own state-space diameter.
    Own,
    /// The largest diameter among the listed policies, for comparable curves.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvBasisArg {
    /// Full chain states.
    Full,
    /// Real cache content only.
    Projected,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Comma-separated policy specs (`lru,fifo,lrum:1,2,alru:dyn:40,2`).
    #[arg(long)]
    pub policies: String,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, default_value = "log:1..10000")]
    pub tgrid: String,
    #[arg(long, value_enum)]
    pub starts: Option<StartsArg>,
    #[arg(long, value_enum, default_value = "default")]
    pub weights: WeightsArg,
    #[arg(long, value_enum, default_value = "own")]
    pub kappa: KappaArg,
    /// Basis of the TV term; defaults to full states, or real content for
    /// dynamic A-LRU.
    #[arg(long, value_enum)]
    pub tv_basis: Option<TvBasisArg>,
    /// Results CSV; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Gnuplot data file, one indexed block per policy.
    #[arg(long)]
    pub dat: Option<PathBuf>,
    /// Gnuplot script plotting `--dat`.
    #[arg(long, requires = "dat")]
    pub gnuplot: Option<PathBuf>,
    #[arg(long, default_value = "learn-error")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value = "lines")]
    pub format: FormatArg,
    /// Rows of the rank-frequency table to print.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub path: PathBuf,
}
