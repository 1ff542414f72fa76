//! Sample-level classifiers built on the coordinate-descent path: ROAD,
//! its diagonal variant, and the two screened variants, each tuned by
//! stratified k-fold cross-validation over the λ grid.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccd::{lambda_grid, solve_path_on_grid, CcdConfig, CcdProblem, CovarianceForm, SolutionPath};
use crate::error::{Error, Result};
use crate::estimation::{estimate, estimate_diagonal, Class, LabeledData, SampleEstimates};
use crate::numerics::{gaussian_sf, RngStream, Vector};
use crate::screening::{expand_correlated, permutation_screen_with, CorrelationKind, ScreeningConfig, ScreeningResult};

/// Child-stream tags.
const CV_TAG: u64 = 1;
const SCREEN_TAG: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Road,
    Droad,
    Sroad1,
    Sroad2,
    /// Independence rule on all features.
    Nb,
    /// Independence rule on the top-|t| features, count chosen by CV.
    Fair,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Road,
        Method::Droad,
        Method::Sroad1,
        Method::Sroad2,
        Method::Nb,
        Method::Fair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Road => "road",
            Self::Droad => "droad",
            Self::Sroad1 => "sroad1",
            Self::Sroad2 => "sroad2",
            Self::Nb => "nb",
            Self::Fair => "fair",
        }
    }

    /// Column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::Road => "ROAD",
            Self::Droad => "D-ROAD",
            Self::Sroad1 => "S-ROAD1",
            Self::Sroad2 => "S-ROAD2",
            Self::Nb => "NB",
            Self::Fair => "FAIR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Settings shared by all fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub ccd: CcdConfig,
    pub folds: usize,
    pub screening: ScreeningConfig,
    /// Correlated features added per screened feature (S-ROAD2).
    pub per_feature: usize,
    pub correlation: CorrelationKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ccd: CcdConfig::default(),
            folds: 5,
            screening: ScreeningConfig::default(),
            per_feature: 1,
            correlation: CorrelationKind::WithinClass,
        }
    }
}

/// `x ↦ Two if w'(x − μ̂_a) > 0 else One`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub method: Method,
    pub w: Vec<f64>,
    pub mu_a_hat: Vec<f64>,
    pub chosen_lambda: f64,
    pub gamma: f64,
    /// Nonzero coordinates of `w`, ascending.
    pub support: Vec<usize>,
    pub screening: Option<ScreeningResult>,
    /// Columns the rule was fitted on when a subset was used, ascending.
    pub fitted_columns: Option<Vec<usize>>,
}

impl LinearClassifier {
    pub fn new(method: Method, w: Vec<f64>, mu_a_hat: Vec<f64>, chosen_lambda: f64, gamma: f64) -> Result<Self> {
        if w.len() != mu_a_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                found: mu_a_hat.len(),
            });
        }
        if w.iter().chain(&mu_a_hat).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier weights"));
        }
        let support = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        Ok(Self {
            method,
            w,
            mu_a_hat,
            chosen_lambda,
            gamma,
            support,
            screening: None,
            fitted_columns: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> Vector {
        Vector::from_column_slice(&self.w)
    }

    /// `w'(x − μ̂_a)` summed over the support in ascending order.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.score_unchecked(|j| x[j]))
    }

    fn score_unchecked(&self, x: impl Fn(usize) -> f64) -> f64 {
        self.support.iter().map(|&j| self.w[j] * (x(j) - self.mu_a_hat[j])).sum()
    }

    pub fn classify(&self, x: &[f64]) -> Result<Class> {
        Ok(label_of(self.score(x)?))
    }

    pub fn predict(&self, data: &LabeledData) -> Result<Vec<Class>> {
        self.check_dim(data)?;
        let x = data.x();
        Ok((0..data.n()).map(|i| label_of(self.score_unchecked(|j| x[(i, j)]))).collect())
    }

    fn check_dim(&self, data: &LabeledData) -> Result<()> {
        if data.p() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.p(),
            });
        }
        Ok(())
    }
}

#[inline]
fn label_of(score: f64) -> Class {
    if score > 0.0 {
        Class::Two
    } else {
        Class::One
    }
}

pub fn classify(clf: &LinearClassifier, x: &[f64]) -> Result<Class> {
    clf.classify(x)
}

/// Plug-in misclassification estimate `1 − Φ(ŵ'μ̂_d / √(ŵ'Σ̂ŵ))`.
pub fn estimate_error(clf: &LinearClassifier, est: &SampleEstimates) -> Result<f64> {
    if est.mu_d_hat.len() != clf.dim() {
        return Err(Error::DimensionMismatch {
            expected: clf.dim(),
            found: est.mu_d_hat.len(),
        });
    }
    let w = clf.weights();
    let quad = est.sigma_hat.quad_form(&w);
    if !(quad > 0.0) {
        return Err(Error::DegenerateDirection { quad });
    }
    Ok(gaussian_sf(w.dot(&est.mu_d_hat) / quad.sqrt()))
}

/// Fraction of `test` misclassified.
pub fn test_error(clf: &LinearClassifier, test: &LabeledData) -> Result<f64> {
    let pred = clf.predict(test)?;
    let wrong = pred.iter().zip(test.y()).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / test.n() as f64)
}

/// Confusion counts `[[1→1, 1→2], [2→1, 2→2]]` (rows are true classes).
pub fn confusion(pred: &[Class], truth: &[Class]) -> [[usize; 2]; 2] {
    let mut m = [[0; 2]; 2];
    for (p, t) in pred.iter().zip(truth) {
        m[(t.label() - 1) as usize][(p.label() - 1) as usize] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// `fold_errors[f][k]`: validation error rate of fold `f` at grid point `k`.
    pub fold_errors: Vec<Vec<f64>>,
    pub mean_errors: Vec<f64>,
    /// Standard error of the fold errors at each grid point.
    pub se_errors: Vec<f64>,
    /// Minimizer of the mean error, ties to the larger λ.
    pub chosen_index: usize,
    /// Largest λ whose mean error is within one standard error of the minimum.
    pub one_se_index: usize,
}

impl CvResult {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen_index]
    }

    pub fn chosen_error(&self) -> f64 {
        self.mean_errors[self.chosen_index]
    }

    /// Builds the summary from per-fold error rates on a shared grid.
    pub fn from_fold_errors(lambdas: Vec<f64>, fold_errors: Vec<Vec<f64>>) -> Self {
        let k = fold_errors.len() as f64;
        let g = lambdas.len();
        let mean_errors: Vec<f64> = (0..g).map(|i| fold_errors.iter().map(|f| f[i]).sum::<f64>() / k).collect();
        let se_errors: Vec<f64> = (0..g)
            .map(|i| {
                let m = mean_errors[i];
                let var = fold_errors.iter().map(|f| (f[i] - m).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
                (var / k).sqrt()
            })
            .collect();
        let mut chosen_index = 0;
        for i in 1..g {
            if mean_errors[i] < mean_errors[chosen_index] {
                chosen_index = i;
            }
        }
        let cutoff = mean_errors[chosen_index] + se_errors[chosen_index];
        let one_se_index = (0..g).find(|&i| mean_errors[i] <= cutoff).unwrap_or(chosen_index);
        Self {
            lambdas,
            fold_errors,
            mean_errors,
            se_errors,
            chosen_index,
            one_se_index,
        }
    }
}

/// Fold index per sample: each class is shuffled separately and dealt
/// round-robin, so fold class proportions differ by at most one.
pub fn stratified_folds(y: &[Class], folds: usize, rng: RngStream) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("at least 2 folds required, got {folds}")));
    }
    let mut r = rng.rng();
    let mut assign = vec![0; y.len()];
    for class in [Class::One, Class::Two] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut r);
        for (pos, i) in idx.into_iter().enumerate() {
            assign[i] = pos % folds;
        }
    }
    Ok(assign)
}

fn check_fold_sizes(data: &LabeledData, folds: usize) -> Result<()> {
    let (n1, n2) = data.class_counts();
    for (class, n) in [(1u8, n1), (2u8, n2)] {
        // The largest validation fold holds ⌈n/folds⌉ of the class.
        let min_train = n.saturating_sub(n.div_ceil(folds));
        if n < folds || min_train < 2 {
            return Err(Error::DegenerateClass {
                class,
                count: n,
                required: folds.max(2 * folds / (folds - 1) + 1),
            });
        }
    }
    Ok(())
}

/// Quadratic form used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    Full,
    Diagonal,
}

/// Solver problem and `μ̂_a` from data.
pub fn build_problem(data: &LabeledData, kind: CovarianceKind, gamma: f64) -> Result<(CcdProblem, Vector)> {
    match kind {
        CovarianceKind::Full => {
            let est = estimate(data)?;
            let pr = CcdProblem::new(CovarianceForm::Dense(est.sigma_hat), est.mu_d_hat, gamma)?;
            Ok((pr, est.mu_a_hat))
        }
        CovarianceKind::Diagonal => {
            let est = estimate_diagonal(data)?;
            let pr = CcdProblem::new(CovarianceForm::Diagonal(est.variances), est.mu_d_hat, gamma)?;
            Ok((pr, est.mu_a_hat))
        }
    }
}

/// Full-data path and CV summary.
#[derive(Debug, Clone)]
pub struct CvFit {
    pub path: SolutionPath,
    pub mu_a_hat: Vector,
    pub cv: CvResult,
}

impl CvFit {
    pub fn chosen_w(&self) -> &[f64] {
        &self.path.points[self.cv.chosen_index].w
    }
}

/// Validation error rate at every point of a fold path.
fn fold_error_rates(path: &SolutionPath, mu_a: &Vector, valid: &LabeledData) -> Vec<f64> {
    let x = valid.x();
    let n = valid.n() as f64;
    path.points
        .iter()
        .map(|pt| {
            let support = pt.support();
            let wrong = (0..valid.n())
                .filter(|&i| {
                    let s: f64 = support.iter().map(|&j| pt.w[j] * (x[(i, j)] - mu_a[j])).sum();
                    label_of(s) != valid.y()[i]
                })
                .count();
            wrong as f64 / n
        })
        .collect()
}

/// Cross-validates the λ grid of the full-data problem and returns the
/// full-data path, so the refit at the chosen λ is a path lookup. Every
/// fold is solved on the same grid.
pub fn cross_validate(data: &LabeledData, kind: CovarianceKind, ccd: &CcdConfig, folds: usize, rng: RngStream) -> Result<CvFit> {
    ccd.validate()?;
    check_fold_sizes(data, folds)?;
    let (problem, mu_a_hat) = build_problem(data, kind, ccd.gamma)?;
    let grid = lambda_grid(problem.lambda_max()?, ccd.tau, ccd.grid_size);
    let assign = stratified_folds(data.y(), folds, rng)?;
    let fold_errors = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| assign[i] != f).collect();
            let valid: Vec<usize> = (0..data.n()).filter(|&i| assign[i] == f).collect();
            let train = data.select_rows(&train)?;
            let valid = data.select_rows(&valid)?;
            let (pr, mu_a) = build_problem(&train, kind, ccd.gamma)?;
            let path = solve_path_on_grid(&pr, &grid, ccd)?;
            Ok(fold_error_rates(&path, &mu_a, &valid))
        })
        .collect::<Result<Vec<_>>>()?;
    let path = solve_path_on_grid(&problem, &grid, ccd)?;
    Ok(CvFit {
        path,
        mu_a_hat,
        cv: CvResult::from_fold_errors(grid, fold_errors),
    })
}

fn classifier_from_cv(method: Method, fit: &CvFit, gamma: f64) -> Result<LinearClassifier> {
    LinearClassifier::new(
        method,
        fit.chosen_w().to_vec(),
        fit.mu_a_hat.as_slice().to_vec(),
        fit.cv.chosen_lambda(),
        gamma,
    )
}

pub fn fit_road(data: &LabeledData, config: &FitConfig, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    let fit = cross_validate(data, CovarianceKind::Full, &config.ccd, config.folds, rng.child(CV_TAG))?;
    Ok((classifier_from_cv(Method::Road, &fit, config.ccd.gamma)?, fit.cv))
}

/// ROAD with the pooled covariance replaced by its diagonal.
pub fn fit_droad(data: &LabeledData, config: &FitConfig, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    let fit = cross_validate(data, CovarianceKind::Diagonal, &config.ccd, config.folds, rng.child(CV_TAG))?;
    Ok((classifier_from_cv(Method::Droad, &fit, config.ccd.gamma)?, fit.cv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SroadVariant {
    /// Screened features only.
    One,
    /// Screened features plus their most correlated companions.
    Two,
}

/// Screens on the full data, fits ROAD on the retained columns and embeds
/// the result back into all `p` coordinates.
pub fn fit_sroad(data: &LabeledData, variant: SroadVariant, config: &FitConfig, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    let screening = permutation_screen_with(data, &config.screening, rng.child(SCREEN_TAG))?;
    let mut columns = match variant {
        SroadVariant::One => screening.selected.clone(),
        SroadVariant::Two => expand_correlated(data, &screening.selected, config.per_feature, config.correlation)?,
    };
    columns.sort_unstable();
    let reduced = data.select_columns(&columns)?;
    let fit = cross_validate(&reduced, CovarianceKind::Full, &config.ccd, config.folds, rng.child(CV_TAG))?;
    let p = data.p();
    let mut w = vec![0.0; p];
    let mut mu_a = estimate_diagonal(data)?.mu_a_hat.as_slice().to_vec();
    for (r, &j) in columns.iter().enumerate() {
        w[j] = fit.chosen_w()[r];
        mu_a[j] = fit.mu_a_hat[r];
    }
    let method = match variant {
        SroadVariant::One => Method::Sroad1,
        SroadVariant::Two => Method::Sroad2,
    };
    let mut clf = LinearClassifier::new(method, w, mu_a, fit.cv.chosen_lambda(), config.ccd.gamma)?;
    clf.screening = Some(screening);
    clf.fitted_columns = Some(columns);
    Ok((clf, fit.cv))
}

/// Dispatches on the ROAD-family method tag.
pub fn fit_method(method: Method, data: &LabeledData, config: &FitConfig, rng: RngStream) -> Result<(LinearClassifier, CvResult)> {
    match method {
        Method::Road => fit_road(data, config, rng),
        Method::Droad => fit_droad(data, config, rng),
        Method::Sroad1 => fit_sroad(data, SroadVariant::One, config, rng),
        Method::Sroad2 => fit_sroad(data, SroadVariant::Two, config, rng),
        Method::Nb | Method::Fair => Err(Error::InvalidArgument(format!(
            "{method} is an independence baseline, not a path method"
        ))),
    }
}
