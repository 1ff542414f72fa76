use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use road_core::ccd::CcdConfig;
use road_core::estimation::TVariance;
use road_core::road::{FitConfig, Method};
use road_core::screening::ScreeningConfig;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "road", version, about = "Sparse affine discriminants for high-dimensional two-class data")]
pub struct Cli {
    /// Master seed. Falls back to ROAD_SEED, then 0.
    #[arg(long, global = true, env = "ROAD_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a classifier on a labelled CSV and write a model file.
    Fit(FitArgs),
    /// Score and classify the rows of a CSV with a fitted model.
    Predict(PredictArgs),
    /// Export the regularization path of the surrogate problem.
    Path(PathArgs),
    /// Population error curves for the equicorrelation model.
    Theory(TheoryArgs),
    /// Permutation t-test screening, optionally expanded by correlation.
    Screen(ScreenArgs),
    /// Exact small-dimension constrained solutions on a seeded instance.
    Oracle(OracleArgs),
    /// Monte-Carlo comparison tables.
    Simulate(SimulateArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: road_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Weight of the quadratic penalty on w'μ_d − 1.
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    /// Smallest λ as a fraction of λ_max.
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    /// Number of λ values.
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_cycles: usize,
}

impl SolverArgs {
    pub fn ccd(&self) -> CcdConfig {
        CcdConfig {
            gamma: self.gamma,
            tau: self.tau,
            grid_size: self.grid_size,
            tol: self.tol,
            max_cycles: self.max_cycles,
            ..CcdConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitOptions {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Quantile of the permuted |t| statistics used as screening threshold.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Correlated features added per screened feature (S-ROAD2).
    #[arg(long, default_value_t = 1)]
    pub expand: usize,
}

impl FitOptions {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            ccd: self.solver.ccd(),
            folds: self.folds,
            screening: ScreeningConfig {
                q: self.q,
                ..ScreeningConfig::default()
            },
            per_feature: self.expand,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Training CSV with a `label` column.
    pub data: PathBuf,
    /// Where to write the model file.
    #[arg(short, long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// road, droad, sroad1, sroad2, nb or fair.
    #[arg(long, default_value = "road", value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub options: FitOptions,
    /// Standardize every sample across its features first.
    #[arg(long)]
    pub standardize_samples: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    pub model: PathBuf,
    /// CSV with the model's feature columns; `label` is optional.
    pub data: PathBuf,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceChoice {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PathArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = CovarianceChoice::Full)]
    pub covariance: CovarianceChoice,
    #[arg(long)]
    pub standardize_samples: bool,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TheoryArgs {
    /// `start:step:end` (inclusive) or a comma list, each ρ in [0, 1).
    #[arg(long, default_value = "0:0.05:0.95")]
    pub rho_grid: String,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceChoice {
    Welch,
    Pooled,
}

impl From<VarianceChoice> for TVariance {
    fn from(v: VarianceChoice) -> Self {
        match v {
            VarianceChoice::Welch => TVariance::Welch,
            VarianceChoice::Pooled => TVariance::Pooled,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreenArgs {
    pub data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Correlated features added per screened feature.
    #[arg(long, default_value_t = 0)]
    pub expand: usize,
    /// Independent permutations whose thresholds are averaged.
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, value_enum, default_value_t = VarianceChoice::Welch)]
    pub variance: VarianceChoice,
    #[arg(long)]
    pub standardize_samples: bool,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    /// Dimension of the seeded instance.
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    /// L1 budgets to solve at (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Compare the coordinate-descent path against the exact solutions.
    #[arg(long)]
    pub crosscheck: bool,
    /// γ of the cross-checked path.
    #[arg(long, default_value_t = 1e6)]
    pub gamma: f64,
    /// Smallest λ of the cross-checked path as a fraction of λ_max.
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioChoice {
    /// Equicorrelated features, ten equal signals.
    Equicorr,
    /// One correlated block of 20 features and an independent remainder.
    Block,
    /// Blocks of ten with negative within-block correlation.
    Negblock,
    /// Random correlation matrix, Laplace signals.
    Random,
    /// Equicorrelation sweep over ρ = 0, 0.1, …, 0.9.
    Table1,
    /// ROAD across γ at ρ = 0, 0.5, 0.9.
    GammaStudy,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioChoice,
    /// Correlation for equicorr, block and gamma-study.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Desk scale: p = 500, 100 samples per class, 10 replications (default).
    #[arg(long, conflicts_with = "full")]
    pub desk: bool,
    /// Full scale: p = 1000, 300 samples per class, 100 replications.
    #[arg(long)]
    pub full: bool,
    /// Override the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Methods to compare (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_method,
          default_value = "road,sroad1,sroad2,droad,fair,nb")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}
