//! Population-level error rates for linear rules under a two-class Gaussian
//! model with common covariance and equal priors.
//!
//! For a direction `w` the rule `1{w'(x − μ_a) > 0}` misclassifies with
//! probability `1 − Φ(w'μ_d / √(w'Σw))`. The Fisher direction `Σ⁻¹μ_d`
//! attains `1 − Φ(√Δ_p)` with `Δ_p = μ_d'Σ⁻¹μ_d`, while the independence rule
//! attains `1 − Φ(√Γ_p)` with `Γ_p = ‖μ_d‖⁴ / μ_d'Σμ_d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_sf, sym_solve, SymMatrix, Vector};

/// Exact two-class Gaussian parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    mu1: Vector,
    mu2: Vector,
    sigma: SymMatrix,
}

impl PopulationModel {
    pub fn new(mu1: Vector, mu2: Vector, sigma: SymMatrix) -> Result<Self> {
        let p = sigma.dim();
        for len in [mu1.len(), mu2.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: len,
                });
            }
        }
        if mu1.iter().chain(mu2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("class means"));
        }
        // Positive definiteness is part of the model contract.
        sigma.cholesky()?;
        Ok(Self { mu1, mu2, sigma })
    }

    /// Model with `μ1 = 0` and `μ2 = 2·mu_d`, so that `mu_d()` returns the
    /// given half-difference exactly.
    pub fn from_mean_difference(mu_d: Vector, sigma: SymMatrix) -> Result<Self> {
        let mu1 = Vector::zeros(mu_d.len());
        let mu2 = mu_d * 2.0;
        Self::new(mu1, mu2, sigma)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn mu1(&self) -> &Vector {
        &self.mu1
    }

    pub fn mu2(&self) -> &Vector {
        &self.mu2
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    /// `(μ2 − μ1)/2`.
    pub fn mu_d(&self) -> Vector {
        (&self.mu2 - &self.mu1) * 0.5
    }

    /// `(μ2 + μ1)/2`.
    pub fn mu_a(&self) -> Vector {
        (&self.mu2 + &self.mu1) * 0.5
    }

    /// The Bayes direction `Σ⁻¹μ_d`.
    pub fn fisher_direction(&self) -> Result<Vector> {
        sym_solve(&self.sigma, &self.mu_d())
    }
}

/// Δ_p, Γ_p and the resulting Fisher and naive-Bayes error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalRates {
    pub delta_p: f64,
    pub gamma_p: f64,
    pub fisher_error: f64,
    pub nb_error: f64,
    pub efficiency_ratio: f64,
}

impl TheoreticalRates {
    fn from_delta_gamma(delta_p: f64, gamma_p: f64) -> Self {
        let efficiency_ratio = if gamma_p > 0.0 { delta_p / gamma_p } else { 1.0 };
        Self {
            delta_p,
            gamma_p,
            fisher_error: gaussian_sf(delta_p.max(0.0).sqrt()),
            nb_error: gaussian_sf(gamma_p.max(0.0).sqrt()),
            efficiency_ratio,
        }
    }
}

/// Misclassification rate of `1{w'(x − μ_a) > 0}`.
pub fn classifier_error(w: &Vector, model: &PopulationModel) -> Result<f64> {
    if w.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: w.len(),
        });
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let quad = model.sigma.quad_form(w);
    if quad <= 0.0 {
        return Err(Error::DegenerateDirection { quad });
    }
    Ok(gaussian_sf(w.dot(&model.mu_d()) / quad.sqrt()))
}

pub fn fisher_rates(model: &PopulationModel) -> Result<TheoreticalRates> {
    let mu_d = model.mu_d();
    let delta_p = mu_d.dot(&sym_solve(&model.sigma, &mu_d)?);
    let norm_sq = mu_d.norm_squared();
    let gamma_p = if norm_sq > 0.0 {
        norm_sq * norm_sq / model.sigma.quad_form(&mu_d)
    } else {
        0.0
    };
    Ok(TheoreticalRates::from_delta_gamma(delta_p, gamma_p))
}

/// Δ_p and Γ_p through the eigen-decomposition of Σ: with
/// `μ_d = Σ a_i ξ_i`, `Δ_p = Σ a_i²/λ_i` and `Γ_p = (Σ a_i²)² / Σ λ_i a_i²`.
pub fn spectral_delta_gamma(model: &PopulationModel) -> Result<(f64, f64)> {
    let eig = model.sigma.as_matrix().clone().symmetric_eigen();
    let coeffs = eig.eigenvectors.transpose() * model.mu_d();
    let mut delta = 0.0;
    let mut a2 = 0.0;
    let mut la2 = 0.0;
    for (i, (&lambda, &a)) in eig.eigenvalues.iter().zip(coeffs.iter()).enumerate() {
        if lambda <= 0.0 {
            return Err(Error::NonPositiveEigenvalue { index: i, value: lambda });
        }
        delta += a * a / lambda;
        a2 += a * a;
        la2 += lambda * a * a;
    }
    let gamma = if a2 > 0.0 { a2 * a2 / la2 } else { 0.0 };
    Ok((delta, gamma))
}

/// Δ for two features with unit variances and correlation `rho`.
pub fn two_feature_delta(mu: [f64; 2], rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidRho { rho, size: 2 });
    }
    let [m1, m2] = mu;
    Ok((m1 * m1 + m2 * m2 - 2.0 * rho * m1 * m2) / (1.0 - rho * rho))
}

/// Fisher-over-naive-Bayes efficiency when μ_d loads equally on every
/// eigenvector. Eigenvalues are first rescaled to sum to `p`.
pub fn efficiency_ratio_equal_loading(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(Error::EmptyInput("eigenvalues"));
    }
    if let Some((index, &value)) = eigenvalues
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }
    let p = eigenvalues.len() as f64;
    let scale = p / eigenvalues.iter().sum::<f64>();
    Ok(eigenvalues.iter().map(|l| 1.0 / (l * scale)).sum::<f64>() / p)
}

/// Error of the best linear rule that only uses the features in `subset`.
pub fn restricted_fisher_error(model: &PopulationModel, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let sigma_s = model.sigma.principal(subset)?;
    let mu_d = model.mu_d();
    let mu_s = Vector::from_iterator(subset.len(), subset.iter().map(|&j| mu_d[j]));
    let delta = mu_s.dot(&sym_solve(&sigma_s, &mu_s)?);
    Ok(gaussian_sf(delta.max(0.0).sqrt()))
}

/// Closed forms for the equicorrelation matrix `(1−ρ)I + ρ11'` of size `p`.
///
/// Quadratic forms only depend on `Σμ_j` and `Σμ_j²`, so large-`p` models
/// with a short support never need a dense matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equicorrelation {
    pub p: usize,
    pub rho: f64,
}

impl Equicorrelation {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::EmptyInput("equicorrelation dimension"));
        }
        let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { f64::NEG_INFINITY };
        if !(rho > lower && rho < 1.0) {
            return Err(Error::InvalidRho { rho, size: p });
        }
        Ok(Self { p, rho })
    }

    /// Eigenvalues: `1 + (p−1)ρ` once and `1 − ρ` with multiplicity `p − 1`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        (1.0 + (self.p as f64 - 1.0) * self.rho, 1.0 - self.rho)
    }

    /// `μ'Σμ` from `sum = 1'μ` and `sum_sq = ‖μ‖²`.
    pub fn quad(&self, sum: f64, sum_sq: f64) -> f64 {
        (1.0 - self.rho) * sum_sq + self.rho * sum * sum
    }

    /// `μ'Σ⁻¹μ` via Sherman–Morrison.
    pub fn inv_quad(&self, sum: f64, sum_sq: f64) -> f64 {
        let r = self.rho;
        let denom = 1.0 - r + self.p as f64 * r;
        (sum_sq - r * sum * sum / denom) / (1.0 - r)
    }

    pub fn dense(&self) -> SymMatrix {
        SymMatrix::from_lower_fn(self.p, |i, j| if i == j { 1.0 } else { self.rho })
            .expect("equicorrelation entries are finite and symmetric")
    }
}

fn sum_stats(v: &[f64]) -> (f64, f64) {
    (v.iter().sum(), v.iter().map(|x| x * x).sum())
}

/// One row of the theoretical error curves against ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub rho: f64,
    pub fisher: f64,
    pub naive_bayes: f64,
    pub sub10: f64,
    pub sub20: f64,
}

/// Dimension of the reference model behind [`figure1_table`].
pub const FIGURE1_P: usize = 1000;

/// Nonzero half mean difference of the reference model; all other
/// coordinates are zero.
pub const FIGURE1_SIGNAL: [f64; 10] = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0];

/// Theoretical Fisher, naive-Bayes and restricted-Fisher error rates for the
/// `p = 1000` equicorrelation model whose mean difference is supported on the
/// first ten coordinates. The 20-feature restricted rule uses the ten signal
/// coordinates plus the next ten, which is equivalent to any other ten by
/// exchangeability.
pub fn figure1_table(rho_grid: &[f64]) -> Result<Vec<Figure1Row>> {
    let (sum, sum_sq) = sum_stats(&FIGURE1_SIGNAL);
    rho_grid
        .iter()
        .map(|&rho| {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidRho { rho, size: FIGURE1_P });
            }
            let full = Equicorrelation::new(FIGURE1_P, rho)?;
            let delta = full.inv_quad(sum, sum_sq);
            let gamma = sum_sq * sum_sq / full.quad(sum, sum_sq);
            let sub10 = Equicorrelation::new(10, rho)?.inv_quad(sum, sum_sq);
            let sub20 = Equicorrelation::new(20, rho)?.inv_quad(sum, sum_sq);
            Ok(Figure1Row {
                rho,
                fisher: gaussian_sf(delta.sqrt()),
                naive_bayes: gaussian_sf(gamma.sqrt()),
                sub10: gaussian_sf(sub10.sqrt()),
                sub20: gaussian_sf(sub20.sqrt()),
            })
        })
        .collect()
}

/// Default ρ grid `0, 0.05, …, 0.95`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..20).map(|k| k as f64 * 0.05).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_cdf, RngStream};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn padded(head: &[f64], p: usize) -> Vector {
        let mut v = Vector::zeros(p);
        v.rows_mut(0, head.len()).copy_from_slice(head);
        v
    }

    #[test]
    fn classifier_error_examples() {
        let model = PopulationModel::new(
            Vector::from_vec(vec![1.0, 2.0]),
            Vector::from_vec(vec![1.0, 2.0]),
            SymMatrix::identity(2),
        )
        .unwrap();
        let w = Vector::from_vec(vec![0.3, -1.2]);
        assert_eq!(classifier_error(&w, &model).unwrap(), 0.5);

        // w'μ_d / √(w'Σw) = 0.5 → 30.9%.
        let model =
            PopulationModel::from_mean_difference(Vector::from_vec(vec![0.5]), SymMatrix::identity(1))
                .unwrap();
        let e = classifier_error(&Vector::from_vec(vec![2.0]), &model).unwrap();
        assert_eq!(format!("{:.3}", e), "0.309");

        assert_eq!(
            classifier_error(&Vector::zeros(1), &model),
            Err(Error::ZeroDirection)
        );
    }

    #[test]
    fn equicorrelation_bayes_error_at_rho_half() {
        // p = 1000 with a 1000×1000 solve, checked against Sherman–Morrison.
        let eq = Equicorrelation::new(1000, 0.5).unwrap();
        let mu_d = padded(&[0.5; 10], 1000);
        let model = PopulationModel::from_mean_difference(mu_d.clone(), eq.dense()).unwrap();
        let w = model.fisher_direction().unwrap();
        let err = classifier_error(&w, &model).unwrap();
        let closed = gaussian_sf(eq.inv_quad(5.0, 2.5).sqrt());
        assert_abs_diff_eq!(err, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(err, 0.0131, epsilon = 5e-4);
    }

    #[test]
    fn fisher_rates_examples() {
        let mu_d = padded(&[0.5; 10], 30);
        let model = PopulationModel::from_mean_difference(mu_d, SymMatrix::identity(30)).unwrap();
        let r = fisher_rates(&model).unwrap();
        assert_abs_diff_eq!(r.delta_p, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.gamma_p, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fisher_error, 1.0 - gaussian_cdf(2.5f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(r.fisher_error, 0.0569, epsilon = 1e-4);
        assert_abs_diff_eq!(r.efficiency_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fisher_rates_split_spectrum_rotated() {
        // Half the eigenvalues 2/11, half 20/11 (condition number 10), with μ_d
        // loading equally on every eigenvector of a random rotation.
        let p = 8;
        let mut rng = RngStream::new(11, 0).rng();
        let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let lambdas: Vec<f64> = (0..p).map(|i| if i < p / 2 { 2.0 / 11.0 } else { 20.0 / 11.0 }).collect();
        let sigma = &q * DMatrix::from_diagonal(&Vector::from_vec(lambdas)) * q.transpose();
        let sigma = SymMatrix::new(0.5 * (&sigma + sigma.transpose())).unwrap();
        let mu_d = &q * Vector::from_element(p, 0.7);
        let model = PopulationModel::from_mean_difference(mu_d, sigma).unwrap();
        let r = fisher_rates(&model).unwrap();
        assert_abs_diff_eq!(r.efficiency_ratio, 3.025, epsilon = 1e-9);
    }

    #[test]
    fn ratio_is_one_for_eigenvector_mean() {
        let eq = Equicorrelation::new(6, 0.3).unwrap();
        let model =
            PopulationModel::from_mean_difference(Vector::from_element(6, 0.4), eq.dense()).unwrap();
        assert_abs_diff_eq!(fisher_rates(&model).unwrap().efficiency_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_feature_examples() {
        assert_abs_diff_eq!(two_feature_delta([1.0, 1.0], 0.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two_feature_delta([4.0, 0.5], -0.25).unwrap(), 18.4, epsilon = 1e-10);
        assert_abs_diff_eq!(two_feature_delta([4.0, 1.0], 0.0).unwrap(), 17.0, epsilon = 1e-10);
        assert!(two_feature_delta([1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn two_feature_monotonicity() {
        let grid: Vec<f64> = (0..990).map(|k| k as f64 / 1000.0).collect();
        // Opposite signs: strictly increasing.
        let d: Vec<f64> = grid.iter().map(|&r| two_feature_delta([1.5, -0.7], r).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        // Same signs: decreasing up to μ2/μ1, increasing afterwards.
        let (m1, m2) = (2.0, 0.5);
        let turn = m2 / m1;
        for w in grid.windows(2) {
            let (a, b) = (two_feature_delta([m1, m2], w[0]).unwrap(), two_feature_delta([m1, m2], w[1]).unwrap());
            if w[1] <= turn {
                assert!(b < a, "expected decrease at rho={}", w[1]);
            } else if w[0] >= turn {
                assert!(b > a, "expected increase at rho={}", w[1]);
            }
        }
    }

    #[test]
    fn equal_loading_ratio_examples() {
        assert_abs_diff_eq!(efficiency_ratio_equal_loading(&[1.0; 7]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            efficiency_ratio_equal_loading(&[1.5, 0.5]).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-12
        );
        let split: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 2.0 / 11.0 } else { 20.0 / 11.0 }).collect();
        assert_abs_diff_eq!(efficiency_ratio_equal_loading(&split).unwrap(), 3.025, epsilon = 1e-12);
        // Rescaling is applied before the formula.
        let scaled: Vec<f64> = split.iter().map(|v| v * 7.0).collect();
        assert_abs_diff_eq!(efficiency_ratio_equal_loading(&scaled).unwrap(), 3.025, epsilon = 1e-12);
        assert!(matches!(
            efficiency_ratio_equal_loading(&[1.0, 0.0]),
            Err(Error::NonPositiveEigenvalue { index: 1, .. })
        ));
    }

    #[test]
    fn restricted_rule_examples() {
        let mut rng = RngStream::new(5, 0).rng();
        let g = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let sigma = SymMatrix::new(&g * g.transpose() + DMatrix::identity(5, 5)).unwrap();
        let mu_d = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let model = PopulationModel::from_mean_difference(mu_d.clone(), sigma.clone()).unwrap();
        let all: Vec<usize> = (0..5).collect();
        assert_abs_diff_eq!(
            restricted_fisher_error(&model, &all).unwrap(),
            fisher_rates(&model).unwrap().fisher_error,
            epsilon = 1e-12
        );
        let single = restricted_fisher_error(&model, &[3]).unwrap();
        assert_abs_diff_eq!(single, gaussian_sf(mu_d[3].abs() / sigma.get(3, 3).sqrt()), epsilon = 1e-14);
        assert_eq!(restricted_fisher_error(&model, &[]), Err(Error::EmptySubset));
    }

    #[test]
    fn restricted_rule_matches_equicorrelation_block() {
        // Dense solve on the 10-feature block against the closed form.
        let p = 60;
        let mu_d = padded(&FIGURE1_SIGNAL, p);
        for &rho in &[0.0, 0.3, 0.8] {
            let eq = Equicorrelation::new(p, rho).unwrap();
            let model = PopulationModel::from_mean_difference(mu_d.clone(), eq.dense()).unwrap();
            let subset: Vec<usize> = (0..10).collect();
            let dense = restricted_fisher_error(&model, &subset).unwrap();
            let closed = figure1_table(&[rho]).unwrap()[0].sub10;
            assert_abs_diff_eq!(dense, closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn equicorrelation_curves() {
        let rows = figure1_table(&default_rho_grid()).unwrap();
        assert_eq!(rows.len(), 20);
        let first = rows[0];
        // ‖μ_s‖² = 25 at independence, so all three curves coincide at 1 − Φ(5).
        assert_abs_diff_eq!(first.fisher, gaussian_sf(5.0), epsilon = 1e-15);
        assert_abs_diff_eq!(first.naive_bayes, first.fisher, epsilon = 1e-15);
        assert_abs_diff_eq!(first.sub10, first.fisher, epsilon = 1e-15);
        assert!(first.fisher < 1e-6);
        assert!(rows.windows(2).all(|w| w[1].naive_bayes >= w[0].naive_bayes));
        assert!(rows.windows(2).all(|w| w[1].fisher <= w[0].fisher));
        assert!(rows.last().unwrap().fisher < 1e-12);
        for r in &rows {
            assert!(r.fisher <= r.sub20 + 1e-15 && r.sub20 <= r.sub10 + 1e-15);
        }
        assert!(figure1_table(&[1.0]).is_err());
    }

    #[test]
    fn equicorrelation_closed_form_matches_solve() {
        let mut rng = RngStream::new(9, 0).rng();
        for &p in &[1usize, 2, 17, 200] {
            for &rho in &[-0.9 / p.max(2) as f64, 0.0, 0.35, 0.9] {
                let eq = Equicorrelation::new(p, rho).unwrap();
                let mu = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
                let dense = mu.dot(&sym_solve(&eq.dense(), &mu).unwrap());
                let closed = eq.inv_quad(mu.sum(), mu.norm_squared());
                assert_abs_diff_eq!(dense, closed, epsilon = 1e-8 * (1.0 + closed.abs()));
            }
        }
    }

    #[test]
    fn delta_dominates_gamma_spectral_route() {
        let mut rng = RngStream::new(21, 0).rng();
        for _ in 0..100 {
            let g = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let sigma = SymMatrix::new(&g * g.transpose() + 0.2 * DMatrix::identity(5, 5)).unwrap();
            let mu_d = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let model = PopulationModel::from_mean_difference(mu_d, sigma).unwrap();
            let r = fisher_rates(&model).unwrap();
            let (delta, gamma) = spectral_delta_gamma(&model).unwrap();
            assert_abs_diff_eq!(r.delta_p, delta, epsilon = 1e-8 * delta);
            assert_abs_diff_eq!(r.gamma_p, gamma, epsilon = 1e-8 * gamma);
            assert!(r.delta_p >= r.gamma_p * (1.0 - 1e-12));
            assert!(r.fisher_error <= r.nb_error + 1e-15);
            let w = model.fisher_direction().unwrap();
            assert_abs_diff_eq!(classifier_error(&w, &model).unwrap(), r.fisher_error, epsilon = 1e-10);
            let scaled = &w * 3.7;
            assert_abs_diff_eq!(
                classifier_error(&scaled, &model).unwrap(),
                classifier_error(&w, &model).unwrap(),
                epsilon = 1e-14
            );
        }
    }
}
