//! Command-line flags and their merge with an optional JSON config file.
//! Flags win over file fields; file fields win over defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "mlpa",
    version,
    about = "Multilevel Langevin estimator of Gibbs expectations"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "MLPA_THREADS")]
    pub threads: Option<usize>,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the parameter plan for a model and accuracy.
    Tune(TuneArgs),
    /// Run the estimator once.
    Run(RunArgs),
    /// Repeat the estimator and report the RMSE against a reference.
    Bench(BenchArgs),
    /// Run a numerical probe.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ou,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    B1,
    B2,
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Norm,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Zero,
    Ones,
    Warmstart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Estimate,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Confluence,
    Contraction,
    InvariantMoment,
}

/// Fields shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Target root mean-squared error, in (0, 1).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Logistic ridge parameter.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Logistic covariate scale: `|x|^2 = 5a`.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub covariate_seed: Option<u64>,
    /// Keep the `log(1 / gamma_0)` factor in the horizons.
    #[arg(long)]
    pub include_log2: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub observable: Option<ObservableKind>,
    #[arg(long, value_enum)]
    pub x0: Option<StartKind>,
    /// Gradient descent to a warm starting point before the run.
    #[arg(long)]
    pub warm_start: bool,
    /// Starting point (or descent start): `zeros`, `ones`, or a file of numbers.
    #[arg(long)]
    pub x_init: Option<String>,
    /// Print the per-level evolution table instead of the full output.
    #[arg(long)]
    pub table: bool,
    /// Refuse plans whose warm start would be clamped.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Benchmark model; same as --model.
    #[arg(long, value_enum)]
    pub suite: Option<ModelKind>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_enum)]
    pub x0: Option<StartKind>,
    /// Logistic reference: a finer estimator run or quadrature.
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceKind>,
    #[arg(long)]
    pub ref_eps: Option<f64>,
    #[arg(long)]
    pub ref_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub probe: ProbeKind,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

/// Config-file schema. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelKind>,
    pub d: Option<usize>,
    pub eps: Option<f64>,
    pub regime: Option<RegimeKind>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub covariate_seed: Option<u64>,
    pub include_log2: Option<bool>,
    pub observable: Option<ObservableKind>,
    pub x0: Option<StartKind>,
    pub x_init: Option<String>,
    pub warm_start: Option<bool>,
    pub n_runs: Option<usize>,
    pub reference: Option<ReferenceKind>,
    pub ref_eps: Option<f64>,
    pub ref_seed: Option<u64>,
    pub gamma: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("malformed config {}: {e}", p.display()))
            }
        }
    }
}

/// Model and plan inputs after merging flags, file and defaults.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub model: ModelKind,
    pub d: usize,
    pub eps: f64,
    pub regime: RegimeKind,
    pub seed: u64,
    pub lambda: f64,
    pub a: f64,
    pub covariate_seed: u64,
    pub include_log2: bool,
}

impl Resolved {
    pub fn new(common: &CommonArgs, file: &FileConfig, model_override: Option<ModelKind>) -> Self {
        Self {
            model: model_override
                .or(common.model)
                .or(file.model)
                .unwrap_or(ModelKind::Ou),
            d: common.d.or(file.d).unwrap_or(10),
            eps: common.eps.or(file.eps).unwrap_or(0.1),
            regime: common.regime.or(file.regime).unwrap_or(RegimeKind::B2),
            seed: common.seed.or(file.seed).unwrap_or(0),
            lambda: common.lambda.or(file.lambda).unwrap_or(0.25),
            a: common.a.or(file.a).unwrap_or(2.0),
            covariate_seed: common.covariate_seed.or(file.covariate_seed).unwrap_or(0),
            include_log2: common.include_log2 || file.include_log2.unwrap_or(false),
        }
    }
}
