//! Sample statistics from labeled two-class data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{SymMatrix, Vector};

/// Class label. `One` is the reference class (rule output 0), `Two` the
/// class assigned when `w'(x − μ_a) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub fn from_label(label: i64) -> Option<Self> {
        match label {
            1 => Some(Self::One),
            2 => Some(Self::Two),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }
}

/// Rows of `x` are samples; `y[i]` labels row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    x: DMatrix<f64>,
    y: Vec<Class>,
}

impl LabeledData {
    /// Validates shape and finiteness. Class sizes are checked by the
    /// operations that need them.
    pub fn new(x: DMatrix<f64>, y: Vec<Class>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyInput("data matrix"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data matrix"));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[Class] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vector {
        self.x.row(i).transpose()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let n2 = self.y.iter().filter(|&&c| c == Class::Two).count();
        (self.y.len() - n2, n2)
    }

    /// Errors unless both classes have at least `min` samples.
    pub fn require_class_sizes(&self, min: usize) -> Result<(usize, usize)> {
        let (n1, n2) = self.class_counts();
        for (class, count) in [(1u8, n1), (2u8, n2)] {
            if count < min {
                return Err(Error::DegenerateClass {
                    class,
                    count,
                    required: min,
                });
            }
        }
        Ok((n1, n2))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows.iter());
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Self::new(x, y)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                dim: self.p(),
            });
        }
        Self::new(self.x.select_columns(cols.iter()), self.y.clone())
    }

    /// Pairs sample `perm[i]` with label `y[i]`.
    pub fn with_permuted_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: perm.len(),
            });
        }
        Self::new(self.x.select_rows(perm.iter()), self.y.clone())
    }

    pub fn with_labels(&self, y: Vec<Class>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.x * factor, self.y.clone())
    }
}

/// Class means and class-centered residuals.
struct ClassMoments {
    mu1: Vector,
    mu2: Vector,
    n1: usize,
    n2: usize,
}

fn class_moments(data: &LabeledData) -> Result<ClassMoments> {
    let (n1, n2) = data.require_class_sizes(2)?;
    let p = data.p();
    let mut mu1 = Vector::zeros(p);
    let mut mu2 = Vector::zeros(p);
    for (i, &c) in data.y.iter().enumerate() {
        let target = if c == Class::One { &mut mu1 } else { &mut mu2 };
        for j in 0..p {
            target[j] += data.x[(i, j)];
        }
    }
    mu1 /= n1 as f64;
    mu2 /= n2 as f64;
    Ok(ClassMoments { mu1, mu2, n1, n2 })
}

fn centered(data: &LabeledData, m: &ClassMoments) -> DMatrix<f64> {
    let mut r = data.x.clone();
    for (i, &c) in data.y.iter().enumerate() {
        let mu = if c == Class::One { &m.mu1 } else { &m.mu2 };
        for j in 0..data.p() {
            r[(i, j)] -= mu[j];
        }
    }
    r
}

/// Samples minus their class mean, the basis of pooled within-class
/// second moments.
pub fn within_class_residuals(data: &LabeledData) -> Result<DMatrix<f64>> {
    let m = class_moments(data)?;
    Ok(centered(data, &m))
}

/// Plug-in estimates used by every sample-level rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEstimates {
    pub mu1_hat: Vector,
    pub mu2_hat: Vector,
    pub mu_d_hat: Vector,
    pub mu_a_hat: Vector,
    /// Pooled covariance with denominator `n1 + n2 − 2`.
    pub sigma_hat: SymMatrix,
    pub n1: usize,
    pub n2: usize,
}

impl SampleEstimates {
    /// Builds estimates from known moments, e.g. to plug in population values.
    pub fn from_parts(mu1_hat: Vector, mu2_hat: Vector, sigma_hat: SymMatrix, n1: usize, n2: usize) -> Self {
        let mu_d_hat = (&mu2_hat - &mu1_hat) * 0.5;
        let mu_a_hat = (&mu2_hat + &mu1_hat) * 0.5;
        Self {
            mu1_hat,
            mu2_hat,
            mu_d_hat,
            mu_a_hat,
            sigma_hat,
            n1,
            n2,
        }
    }
}

/// Class means and the pooled sample covariance
/// `[(n1−1)S1 + (n2−1)S2] / (n1 + n2 − 2)`.
pub fn estimate(data: &LabeledData) -> Result<SampleEstimates> {
    let m = class_moments(data)?;
    let r = centered(data, &m);
    let dof = (m.n1 + m.n2 - 2) as f64;
    let sigma = r.tr_mul(&r) / dof;
    let sigma_hat = SymMatrix::new(sigma)?;
    Ok(SampleEstimates::from_parts(m.mu1, m.mu2, sigma_hat, m.n1, m.n2))
}

/// Means plus the diagonal of the pooled covariance only.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalEstimates {
    pub mu_d_hat: Vector,
    pub mu_a_hat: Vector,
    pub variances: Vector,
    pub n1: usize,
    pub n2: usize,
}

pub fn estimate_diagonal(data: &LabeledData) -> Result<DiagonalEstimates> {
    let m = class_moments(data)?;
    let r = centered(data, &m);
    let dof = (m.n1 + m.n2 - 2) as f64;
    let variances = Vector::from_iterator(
        data.p(),
        r.column_iter().map(|c| c.norm_squared() / dof),
    );
    Ok(DiagonalEstimates {
        mu_d_hat: (&m.mu2 - &m.mu1) * 0.5,
        mu_a_hat: (&m.mu2 + &m.mu1) * 0.5,
        variances,
        n1: m.n1,
        n2: m.n2,
    })
}

/// Variance used in the two-sample t-statistic denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TVariance {
    /// `√(s1²/n1 + s2²/n2)`.
    #[default]
    Welch,
    /// `s_p·√(1/n1 + 1/n2)` with the pooled variance `s_p²`.
    Pooled,
}

/// Per-feature two-sample t-statistics `(x̄2 − x̄1)/se`.
///
/// A feature with zero variance in both classes gets `0` when the class means
/// agree and `±∞` otherwise.
pub fn t_statistics(data: &LabeledData, variance: TVariance) -> Result<Vector> {
    let (n1, n2) = data.require_class_sizes(2)?;
    let p = data.p();
    let (f1, f2) = (n1 as f64, n2 as f64);
    let mut t = Vector::zeros(p);
    for j in 0..p {
        let col = data.x.column(j);
        let (mut s1, mut s2) = (0.0, 0.0);
        for (i, &c) in data.y.iter().enumerate() {
            match c {
                Class::One => s1 += col[i],
                Class::Two => s2 += col[i],
            }
        }
        let (m1, m2) = (s1 / f1, s2 / f2);
        let (mut ss1, mut ss2) = (0.0, 0.0);
        for (i, &c) in data.y.iter().enumerate() {
            match c {
                Class::One => ss1 += (col[i] - m1).powi(2),
                Class::Two => ss2 += (col[i] - m2).powi(2),
            }
        }
        let (v1, v2) = (ss1 / (f1 - 1.0), ss2 / (f2 - 1.0));
        let se = match variance {
            TVariance::Welch => (v1 / f1 + v2 / f2).sqrt(),
            TVariance::Pooled => {
                let sp2 = (ss1 + ss2) / (f1 + f2 - 2.0);
                (sp2 * (1.0 / f1 + 1.0 / f2)).sqrt()
            }
        };
        let diff = m2 - m1;
        t[j] = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
    }
    Ok(t)
}

/// Denominator of the per-sample variance in [`standardize_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VarianceDenominator {
    /// `p − 1`.
    #[default]
    Unbiased,
    /// `p`.
    Population,
}

/// Standardizes every sample (row) to mean zero and unit variance across its
/// features.
pub fn standardize_samples(data: &LabeledData, denom: VarianceDenominator) -> Result<LabeledData> {
    LabeledData::new(standardize_rows(&data.x, denom)?, data.y.clone())
}

/// Row-wise standardization of a bare feature matrix.
pub fn standardize_rows(x: &DMatrix<f64>, denom: VarianceDenominator) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    if p < 2 {
        return Err(Error::InvalidArgument(
            "per-sample standardization needs at least two features".into(),
        ));
    }
    let d = match denom {
        VarianceDenominator::Unbiased => (p - 1) as f64,
        VarianceDenominator::Population => p as f64,
    };
    let mut x = x.clone();
    for (i, mut row) in x.row_iter_mut().enumerate() {
        let mean = row.sum() / p as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        if !(var > 0.0) {
            return Err(Error::ConstantSample { row: i });
        }
        let sd = var.sqrt();
        row.apply(|v| *v = (*v - mean) / sd);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn labels(v: &[u8]) -> Vec<Class> {
        v.iter().map(|&l| Class::from_label(l as i64).unwrap()).collect()
    }

    fn random_data(n: usize, p: usize, seed: u64) -> LabeledData {
        let mut rng = RngStream::new(seed, 0).rng();
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let mut y: Vec<Class> = (0..n).map(|i| if i % 2 == 0 { Class::One } else { Class::Two }).collect();
        y.swap(0, n - 1);
        LabeledData::new(x, y).unwrap()
    }

    #[test]
    fn estimate_hand_example() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 1.0, 1.0, 3.0, 1.0]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        let est = estimate(&data).unwrap();
        assert_eq!(est.mu_d_hat.as_slice(), &[0.5, 0.5]);
        assert_eq!(est.mu_a_hat.as_slice(), &[1.5, 0.5]);
        assert_eq!(est.sigma_hat.as_matrix().as_slice(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!((est.n1, est.n2), (2, 2));
    }

    #[test]
    fn identical_clouds_give_zero_difference() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 5.0, 0.0, 1.0, 2.0, 5.0]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        assert_eq!(estimate(&data).unwrap().mu_d_hat.amax(), 0.0);
    }

    #[test]
    fn single_sample_class_is_degenerate() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 5.0]);
        let data = LabeledData::new(x, labels(&[1, 2, 2, 2])).unwrap();
        assert!(matches!(estimate(&data), Err(Error::DegenerateClass { class: 1, count: 1, .. })));
    }

    #[test]
    fn estimate_handles_p_greater_than_n() {
        let data = random_data(6, 20, 1);
        let est = estimate(&data).unwrap();
        assert_eq!(est.sigma_hat.dim(), 20);
        assert!(est.sigma_hat.cholesky().is_err());
    }

    #[test]
    fn pooled_covariance_permutation_invariant() {
        let data = random_data(12, 4, 3);
        let mut rows: Vec<usize> = (0..12).collect();
        rows.reverse();
        let a = estimate(&data).unwrap();
        let b = estimate(&data.select_rows(&rows).unwrap()).unwrap();
        assert!((a.sigma_hat.as_matrix() - b.sigma_hat.as_matrix()).amax() < 1e-14);
        let d = estimate_diagonal(&data).unwrap();
        assert!((d.variances - a.sigma_hat.diagonal()).amax() < 1e-14);
    }

    #[test]
    fn t_statistic_examples() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 7.0, 2.0, 7.0, 3.0, 7.0, 5.0, 7.0]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        let t = t_statistics(&data, TVariance::Welch).unwrap();
        assert_abs_diff_eq!(t[0], 3.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(t[0], 2.1213, epsilon = 1e-4);
        assert_eq!(t[1], 0.0);
        // Equal class sizes: pooled and Welch coincide.
        let tp = t_statistics(&data, TVariance::Pooled).unwrap();
        assert_abs_diff_eq!(tp[0], t[0], epsilon = 1e-12);

        let swapped = data.with_labels(labels(&[2, 2, 1, 1])).unwrap();
        let ts = t_statistics(&swapped, TVariance::Welch).unwrap();
        assert_abs_diff_eq!(ts[0], -t[0], epsilon = 1e-15);
    }

    #[test]
    fn t_statistic_zero_variance_sentinel() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 4.0, 4.0]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        assert_eq!(t_statistics(&data, TVariance::Welch).unwrap()[0], f64::INFINITY);
    }

    #[test]
    fn t_statistics_match_brute_force() {
        for seed in 0..20 {
            let data = random_data(5, 4, 100 + seed);
            let t = t_statistics(&data, TVariance::Welch).unwrap();
            for j in 0..4 {
                let g1: Vec<f64> = (0..5).filter(|&i| data.y()[i] == Class::One).map(|i| data.x()[(i, j)]).collect();
                let g2: Vec<f64> = (0..5).filter(|&i| data.y()[i] == Class::Two).map(|i| data.x()[(i, j)]).collect();
                let mean = |g: &[f64]| g.iter().sum::<f64>() / g.len() as f64;
                let var = |g: &[f64]| {
                    let m = mean(g);
                    g.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (g.len() as f64 - 1.0)
                };
                let expect = (mean(&g2) - mean(&g1))
                    / (var(&g1) / g1.len() as f64 + var(&g2) / g2.len() as f64).sqrt();
                assert_abs_diff_eq!(t[j], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn standardize_examples() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 0.0, 4.0, 9.0, 3.0, 1.0, 1.5]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        let pop = standardize_samples(&data, VarianceDenominator::Population).unwrap();
        assert_abs_diff_eq!(pop.x()[(0, 0)], -1.2247, epsilon = 1e-4);
        assert_abs_diff_eq!(pop.x()[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pop.x()[(0, 2)], 1.2247, epsilon = 1e-4);
        let unb = standardize_samples(&data, VarianceDenominator::Unbiased).unwrap();
        assert_abs_diff_eq!(unb.x()[(0, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(unb.x()[(0, 2)], 1.0, epsilon = 1e-15);
        let again = standardize_samples(&unb, VarianceDenominator::Unbiased).unwrap();
        assert!((again.x() - unb.x()).amax() < 1e-12);

        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 5.0, 5.0, 0.0, 4.0, 3.0, 1.0]);
        let data = LabeledData::new(x, labels(&[1, 1, 2, 2])).unwrap();
        assert_eq!(
            standardize_samples(&data, VarianceDenominator::Unbiased),
            Err(Error::ConstantSample { row: 1 })
        );
    }
}
