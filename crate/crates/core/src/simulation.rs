//! Gaussian two-class scenarios and the Monte-Carlo experiment runner.
//!
//! Class one has mean zero and class two mean `μ₂`, so `μ_d = μ₂/2`. A
//! scenario fixes `Σ` and `μ₂` once per experiment (drawing them from the
//! master seed when the spec is random); every replication then samples an
//! independent training and test set of `n_per_class` draws per class.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate_diagonal, t_statistics, Class, LabeledData, TVariance};
use crate::numerics::{gaussian_sf, sym_solve, RngStream, SymMatrix, Vector};
use crate::population::{Equicorrelation, PopulationModel};
use crate::road::{fit_method, stratified_folds, test_error, CvResult, FitConfig, LinearClassifier, Method};

const MODEL_TAG: u64 = 11;
const REPLICATION_TAG: u64 = 12;
const DATA_TAG: u64 = 0;
const FAIR_CV_TAG: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovarianceSpec {
    /// `(1 − ρ)I + ρ11'`.
    Equicorrelation { rho: f64 },
    /// Equicorrelated diagonal blocks sharing one ρ; sizes must sum to `p`.
    BlockDiagonal { sizes: Vec<usize>, rho: f64 },
    /// `Ω ~ Unif(−1, 1)^{p×m}`, `Ξ = ΩΩ' + min_i(ΩΩ')_ii I`, rescaled to unit
    /// diagonal.
    Random { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalSpec {
    /// Leading entries of `μ₂`; the rest are zero.
    Fixed(Vec<f64>),
    /// `value` on the first `s0` coordinates.
    SparseFixed { s0: usize, value: f64 },
    /// Laplace(0, `scale`) draws on the first `s0` coordinates.
    DoubleExponential { s0: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub p: usize,
    pub n_per_class: usize,
    pub covariance: CovarianceSpec,
    pub signal: SignalSpec,
}

/// Desk-scale dimension and per-class sample size.
pub const DESK_P: usize = 500;
pub const DESK_N: usize = 100;
pub const DESK_REPLICATIONS: usize = 10;
/// Full-scale settings of the published experiments.
pub const FULL_P: usize = 1000;
pub const FULL_N: usize = 300;
pub const FULL_REPLICATIONS: usize = 100;

impl Scenario {
    /// Equicorrelation with `μ₂ = (1₁₀, 0)`.
    pub fn equicorrelation(p: usize, n_per_class: usize, rho: f64) -> Self {
        Self {
            name: format!("equicorrelation rho={rho}"),
            p,
            n_per_class,
            covariance: CovarianceSpec::Equicorrelation { rho },
            signal: SignalSpec::SparseFixed { s0: 10, value: 1.0 },
        }
    }

    /// Blocks of size 20 and `p − 20` with common ρ, `μ₂ = (1₁₀, 0)`.
    pub fn block_diagonal(p: usize, n_per_class: usize, rho: f64) -> Self {
        Self {
            name: format!("block-diagonal rho={rho}"),
            p,
            n_per_class,
            covariance: CovarianceSpec::BlockDiagonal { sizes: vec![20, p - 20], rho },
            signal: SignalSpec::SparseFixed { s0: 10, value: 1.0 },
        }
    }

    /// Blocks of size 10 with ρ = −0.1, `μ₂ = 0.5·(1₅, 0₅, 1₅, 0)`.
    pub fn negative_blocks(p: usize, n_per_class: usize) -> Self {
        let mut sizes = vec![10; p / 10];
        if !p.is_multiple_of(10) {
            sizes.push(p % 10);
        }
        let mut lead = vec![0.5; 5];
        lead.extend([0.0; 5]);
        lead.extend([0.5; 5]);
        Self {
            name: "negative-blocks rho=-0.1".into(),
            p,
            n_per_class,
            covariance: CovarianceSpec::BlockDiagonal { sizes, rho: -0.1 },
            signal: SignalSpec::Fixed(lead),
        }
    }

    /// Random correlation with `m = 10` and Laplace(0, 1/2) signal on ten
    /// coordinates.
    pub fn random_correlation(p: usize, n_per_class: usize) -> Self {
        Self {
            name: "random-correlation m=10".into(),
            p,
            n_per_class,
            covariance: CovarianceSpec::Random { m: 10 },
            signal: SignalSpec::DoubleExponential { s0: 10, scale: 0.5 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::EmptyInput("scenario dimension"));
        }
        if self.n_per_class < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least 2 samples per class required, got {}",
                self.n_per_class
            )));
        }
        match &self.covariance {
            CovarianceSpec::Equicorrelation { rho } => {
                Equicorrelation::new(self.p, *rho)?;
            }
            CovarianceSpec::BlockDiagonal { sizes, rho } => {
                let total: usize = sizes.iter().sum();
                if total != self.p || sizes.contains(&0) {
                    return Err(Error::InvalidArgument(format!(
                        "block sizes {sizes:?} do not partition p = {}",
                        self.p
                    )));
                }
                for &b in sizes {
                    Equicorrelation::new(b, *rho)?;
                }
            }
            CovarianceSpec::Random { m } => {
                if *m == 0 {
                    return Err(Error::InvalidArgument("random covariance needs m ≥ 1".into()));
                }
            }
        }
        let s0 = match &self.signal {
            SignalSpec::Fixed(v) => v.len(),
            SignalSpec::SparseFixed { s0, .. } | SignalSpec::DoubleExponential { s0, .. } => *s0,
        };
        if s0 > self.p {
            return Err(Error::InvalidArgument(format!("signal length {s0} exceeds p = {}", self.p)));
        }
        Ok(())
    }
}

pub fn make_covariance(spec: &CovarianceSpec, p: usize, rng: RngStream) -> Result<SymMatrix> {
    match spec {
        CovarianceSpec::Equicorrelation { rho } => Ok(Equicorrelation::new(p, *rho)?.dense()),
        CovarianceSpec::BlockDiagonal { sizes, rho } => {
            let mut block_of = Vec::with_capacity(p);
            for (b, &size) in sizes.iter().enumerate() {
                Equicorrelation::new(size, *rho)?;
                block_of.extend(std::iter::repeat_n(b, size));
            }
            if block_of.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: block_of.len(),
                });
            }
            SymMatrix::from_lower_fn(p, |i, j| {
                if i == j {
                    1.0
                } else if block_of[i] == block_of[j] {
                    *rho
                } else {
                    0.0
                }
            })
        }
        CovarianceSpec::Random { m } => {
            let mut r = rng.rng();
            let mut omega: DMatrix<f64> = DMatrix::zeros(p, *m);
            for i in 0..p {
                for j in 0..*m {
                    omega[(i, j)] = r.random_range(-1.0..1.0);
                }
            }
            let mut xi = &omega * omega.transpose();
            let c = xi.diagonal().min();
            for i in 0..p {
                xi[(i, i)] += c;
            }
            let d: Vec<f64> = xi.diagonal().iter().map(|v| v.sqrt()).collect();
            SymMatrix::from_lower_fn(p, |i, j| if i == j { 1.0 } else { xi[(i, j)] / (d[i] * d[j]) })
        }
    }
}

/// Laplace(0, `scale`) by inversion.
pub fn laplace_sample(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `μ₂` of length `p`.
pub fn make_signal(spec: &SignalSpec, p: usize, rng: RngStream) -> Result<Vector> {
    let mut mu = Vector::zeros(p);
    match spec {
        SignalSpec::Fixed(lead) => {
            if lead.len() > p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: lead.len(),
                });
            }
            mu.rows_mut(0, lead.len()).copy_from_slice(lead);
        }
        SignalSpec::SparseFixed { s0, value } => {
            if *s0 > p {
                return Err(Error::IndexOutOfRange { index: *s0, dim: p });
            }
            mu.rows_mut(0, *s0).fill(*value);
        }
        SignalSpec::DoubleExponential { s0, scale } => {
            if *s0 > p {
                return Err(Error::IndexOutOfRange { index: *s0, dim: p });
            }
            let mut r = rng.rng();
            for j in 0..*s0 {
                mu[j] = laplace_sample(&mut r, *scale);
            }
        }
    }
    Ok(mu)
}

/// A scenario with `Σ`, `μ₂` and the sampling factor fixed.
#[derive(Debug, Clone)]
pub struct MaterializedScenario {
    pub scenario: Scenario,
    pub model: PopulationModel,
    /// Lower Cholesky factor `L` with `Σ = LL'`.
    pub factor: DMatrix<f64>,
}

impl MaterializedScenario {
    /// Covariance and signal come from independent children of `rng`.
    pub fn new(scenario: &Scenario, rng: RngStream) -> Result<Self> {
        scenario.validate()?;
        let sigma = make_covariance(&scenario.covariance, scenario.p, rng.child(1))?;
        let mu2 = make_signal(&scenario.signal, scenario.p, rng.child(2))?;
        let factor = sigma.cholesky()?.l();
        let model = PopulationModel::new(Vector::zeros(scenario.p), mu2, sigma)?;
        Ok(Self {
            scenario: scenario.clone(),
            model,
            factor,
        })
    }

    /// `Δ_p = μ_d'Σ⁻¹μ_d`, by closed form for (block) equicorrelation.
    pub fn delta(&self) -> Result<f64> {
        let mu_d = self.model.mu_d();
        match &self.scenario.covariance {
            CovarianceSpec::Equicorrelation { rho } => {
                let e = Equicorrelation::new(self.scenario.p, *rho)?;
                Ok(e.inv_quad(mu_d.sum(), mu_d.norm_squared()))
            }
            CovarianceSpec::BlockDiagonal { sizes, rho } => {
                let mut start = 0;
                let mut total = 0.0;
                for &b in sizes {
                    let seg = mu_d.rows(start, b);
                    total += Equicorrelation::new(b, *rho)?.inv_quad(seg.sum(), seg.norm_squared());
                    start += b;
                }
                Ok(total)
            }
            CovarianceSpec::Random { .. } => Ok(mu_d.dot(&sym_solve(self.model.sigma(), &mu_d)?)),
        }
    }

    /// Bayes error `1 − Φ(√Δ_p)`.
    pub fn oracle_error(&self) -> Result<f64> {
        Ok(gaussian_sf(self.delta()?.sqrt()))
    }

    fn draw(&self, n_per_class: usize, rng: &mut impl Rng) -> Result<LabeledData> {
        let p = self.scenario.p;
        let n = 2 * n_per_class;
        let mut z: DMatrix<f64> = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                z[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let mut x = z * self.factor.transpose();
        let mu2 = self.model.mu2();
        for i in n_per_class..n {
            for j in 0..p {
                x[(i, j)] += mu2[j];
            }
        }
        let mut y = vec![Class::One; n_per_class];
        y.extend(vec![Class::Two; n_per_class]);
        LabeledData::new(x, y)
    }

    /// Independent training and test sets, training drawn first.
    pub fn sample_dataset(&self, rng: RngStream) -> Result<(LabeledData, LabeledData)> {
        let mut r = rng.rng();
        let train = self.draw(self.scenario.n_per_class, &mut r)?;
        let test = self.draw(self.scenario.n_per_class, &mut r)?;
        Ok((train, test))
    }
}

/// Independence rule `w_j = μ̂_dj / σ̂_j²` on `columns` (all when `None`).
fn independence_rule(data: &LabeledData, columns: Option<&[usize]>, method: Method) -> Result<LinearClassifier> {
    let est = estimate_diagonal(data)?;
    let p = data.p();
    let mut w = vec![0.0; p];
    let mut set = |j: usize| {
        let v = est.variances[j];
        w[j] = if v > 0.0 { est.mu_d_hat[j] / v } else { 0.0 };
    };
    match columns {
        Some(cols) => cols.iter().for_each(|&j| set(j)),
        None => (0..p).for_each(set),
    }
    LinearClassifier::new(method, w, est.mu_a_hat.as_slice().to_vec(), 0.0, 0.0)
}

pub fn naive_bayes_fit(data: &LabeledData) -> Result<LinearClassifier> {
    independence_rule(data, None, Method::Nb)
}

/// `1, 2, 4, …` below `limit`, then `limit` itself.
pub fn fair_grid(limit: usize) -> Vec<usize> {
    let mut g = Vec::new();
    let mut m = 1;
    while m < limit {
        g.push(m);
        m *= 2;
    }
    g.push(limit.max(1));
    g
}

/// Features ranked by `|t_j|` descending, ties to the lower index.
fn t_ranking(data: &LabeledData) -> Result<Vec<usize>> {
    let t = t_statistics(data, TVariance::Welch)?;
    let mut order: Vec<usize> = (0..data.p()).collect();
    order.sort_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    Ok(order)
}

fn top_columns(ranking: &[usize], m: usize) -> Vec<usize> {
    let mut cols = ranking[..m].to_vec();
    cols.sort_unstable();
    cols
}

/// Independence rule on the `m` features of largest `|t_j|`, with `m` taken
/// from `grid` by stratified CV (ties to the smaller `m`).
pub fn fair_like_fit_on_grid(data: &LabeledData, grid: &[usize], folds: usize, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    if grid.is_empty() || grid.iter().any(|&m| m == 0 || m > data.p()) {
        return Err(Error::InvalidArgument(format!("feature-count grid {grid:?} outside [1, {}]", data.p())));
    }
    let assign = stratified_folds(data.y(), folds, rng)?;
    let mut fold_errors = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..data.n()).filter(|&i| assign[i] != f).collect();
        let valid: Vec<usize> = (0..data.n()).filter(|&i| assign[i] == f).collect();
        let train = data.select_rows(&train)?;
        let valid = data.select_rows(&valid)?;
        let ranking = t_ranking(&train)?;
        let errs = grid
            .iter()
            .map(|&m| {
                let clf = independence_rule(&train, Some(&top_columns(&ranking, m)), Method::Fair)?;
                test_error(&clf, &valid)
            })
            .collect::<Result<Vec<_>>>()?;
        fold_errors.push(errs);
    }
    let cv = CvResult::from_fold_errors(grid.iter().map(|&m| m as f64).collect(), fold_errors);
    let m = grid[cv.chosen_index];
    let clf = independence_rule(data, Some(&top_columns(&t_ranking(data)?, m)), Method::Fair)?;
    Ok((clf, cv))
}

pub fn fair_like_fit(data: &LabeledData, folds: usize, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    fair_like_fit_on_grid(data, &fair_grid(data.p().min(data.n())), folds, rng)
}

/// Fits any method tag.
pub fn fit_any(method: Method, data: &LabeledData, config: &FitConfig, rng: RngStream) -> Result<LinearClassifier> {
    Ok(fit_with_cv(method, data, config, rng)?.0)
}

/// As [`fit_any`], also returning the cross-validation curve when the
/// method has one (naive Bayes does not).
pub fn fit_with_cv(method: Method, data: &LabeledData, config: &FitConfig, rng: RngStream) -> Result<(LinearClassifier, Option<CvResult>)> {
    match method {
        Method::Nb => Ok((naive_bayes_fit(data)?, None)),
        Method::Fair => {
            let (clf, cv) = fair_like_fit(data, config.folds, rng.child(FAIR_CV_TAG))?;
            Ok((clf, Some(cv)))
        }
        _ => {
            let (clf, cv) = fit_method(method, data, config, rng)?;
            Ok((clf, Some(cv)))
        }
    }
}

/// One replication's test error (fraction) and support size per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub errors: Vec<f64>,
    pub nonzeros: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_error_pct: f64,
    pub sd_error_pct: f64,
    pub median_nonzero: f64,
    pub sd_nonzero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub summaries: Vec<MethodSummary>,
    pub oracle_error_pct: f64,
    pub replications: usize,
    pub completed: usize,
    pub failed: usize,
    pub records: Vec<ReplicationRecord>,
    /// Wall-clock seconds; never rendered into report tables.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn median_error_pct(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|s| s.median_error_pct)
    }
}

/// Median, averaging the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation (denominator `n − 1`; zero for one value).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

/// Fits every method on one replication. Method `k` draws from
/// `rep.child(k + 1)` so adding a method does not disturb the others.
fn run_replication(ms: &MaterializedScenario, methods: &[Method], config: &FitConfig, r: usize, rep: RngStream) -> Result<ReplicationRecord> {
    let (train, test) = ms.sample_dataset(rep.child(DATA_TAG))?;
    let mut errors = Vec::with_capacity(methods.len());
    let mut nonzeros = Vec::with_capacity(methods.len());
    for (k, &m) in methods.iter().enumerate() {
        let clf = fit_any(m, &train, config, rep.child(k as u64 + 1))?;
        errors.push(test_error(&clf, &test)?);
        nonzeros.push(clf.support.len());
    }
    Ok(ReplicationRecord {
        replication: r,
        errors,
        nonzeros,
    })
}

/// Monte-Carlo comparison of `methods`. Replication `r` uses stream `r` of
/// a child of `rng`; replications run in parallel and are reduced in index
/// order, so the report does not depend on the thread count.
pub fn run_experiment(scenario: &Scenario, methods: &[Method], replications: usize, config: &FitConfig, rng: RngStream) -> Result<ExperimentReport> {
    let ms = MaterializedScenario::new(scenario, rng.child(MODEL_TAG))?;
    run_materialized(&ms, methods, replications, config, rng)
}

/// As [`run_experiment`] for an already materialized scenario.
pub fn run_materialized(
    ms: &MaterializedScenario,
    methods: &[Method],
    replications: usize,
    config: &FitConfig,
    rng: RngStream,
) -> Result<ExperimentReport> {
    if replications == 0 {
        return Err(Error::InvalidArgument("at least one replication required".into()));
    }
    if methods.is_empty() {
        return Err(Error::EmptyInput("method list"));
    }
    let start = Instant::now();
    let base = rng.child(REPLICATION_TAG);
    let outcomes: Vec<Result<ReplicationRecord>> = (0..replications)
        .into_par_iter()
        .map(|r| run_replication(ms, methods, config, r, base.with_stream(r as u64)))
        .collect();
    let mut records = Vec::with_capacity(replications);
    let mut failed = 0;
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failed += 1;
                log::warn!("replication {r} of '{}' skipped: {e}", ms.scenario.name);
            }
        }
    }
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let errs: Vec<f64> = records.iter().map(|r| 100.0 * r.errors[k]).collect();
            let nz: Vec<f64> = records.iter().map(|r| r.nonzeros[k] as f64).collect();
            MethodSummary {
                method,
                median_error_pct: median(&errs),
                sd_error_pct: sample_sd(&errs),
                median_nonzero: median(&nz),
                sd_nonzero: sample_sd(&nz),
            }
        })
        .collect();
    Ok(ExperimentReport {
        scenario: ms.scenario.clone(),
        methods: methods.to_vec(),
        summaries,
        oracle_error_pct: 100.0 * ms.oracle_error()?,
        replications,
        completed: records.len(),
        failed,
        records,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub median_error_pct: f64,
    pub sd_error_pct: f64,
    pub median_nonzero: f64,
    pub sd_nonzero: f64,
    pub completed: usize,
}

/// ROAD at each γ on the same replicated datasets.
pub fn gamma_sensitivity(scenario: &Scenario, gammas: &[f64], replications: usize, config: &FitConfig, rng: RngStream) -> Result<Vec<GammaRow>> {
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidArgument(format!("gammas must be positive, got {gammas:?}")));
    }
    let ms = MaterializedScenario::new(scenario, rng.child(MODEL_TAG))?;
    gammas
        .iter()
        .map(|&gamma| {
            let mut cfg = *config;
            cfg.ccd.gamma = gamma;
            let rep = run_materialized(&ms, &[Method::Road], replications, &cfg, rng)?;
            let s = &rep.summaries[0];
            Ok(GammaRow {
                gamma,
                median_error_pct: s.median_error_pct,
                sd_error_pct: s.sd_error_pct,
                median_nonzero: s.median_nonzero,
                sd_nonzero: s.sd_nonzero,
                completed: rep.completed,
            })
        })
        .collect()
}

/// Decimal rendering with `digits` significant digits (integers keep all
/// their digits). Magnitudes below `1e-4` switch to scientific notation.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NA".into() } else { format!("{x}") };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i64;
    if mag < -4 {
        let precision = digits.max(1) - 1;
        return format!("{x:.precision$e}");
    }
    let decimals = (digits as i64 - 1 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Wide CSV: one row per labelled report, columns
/// `{method}_error,{method}_error_sd,{method}_nonzero,{method}_nonzero_sd`
/// per method, then `oracle_error` and replication counts. Errors are
/// percentages.
pub fn render_table(row_header: &str, rows: &[(String, ExperimentReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    out.push_str(row_header);
    for m in &first.methods {
        let l = m.label();
        let _ = write!(out, ",{l}_error,{l}_error_sd,{l}_nonzero,{l}_nonzero_sd");
    }
    out.push_str(",Oracle_error,completed,failed\n");
    for (label, rep) in rows {
        out.push_str(label);
        for s in &rep.summaries {
            let _ = write!(
                out,
                ",{},{},{},{}",
                fmt_sig(s.median_error_pct, 4),
                fmt_sig(s.sd_error_pct, 4),
                fmt_sig(s.median_nonzero, 4),
                fmt_sig(s.sd_nonzero, 4)
            );
        }
        let _ = writeln!(out, ",{},{},{}", fmt_sig(rep.oracle_error_pct, 4), rep.completed, rep.failed);
    }
    out
}

pub fn render_gamma_table(rows: &[GammaRow]) -> String {
    let mut out = String::from("gamma,ROAD_error,ROAD_error_sd,ROAD_nonzero,ROAD_nonzero_sd,completed\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(r.gamma, 4),
            fmt_sig(r.median_error_pct, 4),
            fmt_sig(r.sd_error_pct, 4),
            fmt_sig(r.median_nonzero, 4),
            fmt_sig(r.sd_nonzero, 4),
            r.completed
        );
    }
    out
}

/// γ-by-setting layout: one row per γ, then median error and median
/// nonzero count (each with its standard deviation) for every labelled
/// setting. All settings must share the same γ grid.
pub fn render_gamma_study(settings: &[(String, Vec<GammaRow>)]) -> Result<String> {
    let Some((_, first)) = settings.first() else {
        return Ok(String::new());
    };
    let gammas: Vec<f64> = first.iter().map(|r| r.gamma).collect();
    if settings
        .iter()
        .any(|(_, rows)| rows.iter().map(|r| r.gamma).ne(gammas.iter().copied()))
    {
        return Err(Error::InvalidArgument("gamma grids differ between settings".into()));
    }
    let mut out = String::from("gamma");
    for (label, _) in settings {
        let _ = write!(out, ",{label}_error,{label}_error_sd");
    }
    for (label, _) in settings {
        let _ = write!(out, ",{label}_nonzero,{label}_nonzero_sd");
    }
    out.push('\n');
    for (i, gamma) in gammas.iter().enumerate() {
        out.push_str(&fmt_sig(*gamma, 4));
        for (_, rows) in settings {
            let _ = write!(out, ",{},{}", fmt_sig(rows[i].median_error_pct, 4), fmt_sig(rows[i].sd_error_pct, 4));
        }
        for (_, rows) in settings {
            let _ = write!(out, ",{},{}", fmt_sig(rows[i].median_nonzero, 4), fmt_sig(rows[i].sd_nonzero, 4));
        }
        out.push('\n');
    }
    Ok(out)
}

/// ρ values of the equicorrelation and block-diagonal sweeps.
pub fn table_rho_grid() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

/// γ values of the sensitivity study.
pub const GAMMA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
