//! Marginal t-statistic screening calibrated by a label permutation, and
//! expansion of a screened set by within-class correlation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{t_statistics, within_class_residuals, LabeledData, TVariance};
use crate::numerics::{empirical_quantile, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    /// Quantile level of the permuted `|t*|` used as threshold.
    pub q: f64,
    pub variance: TVariance,
    /// Number of independent permutations whose thresholds are averaged.
    pub repetitions: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            variance: TVariance::Welch,
            repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub t_abs: Vec<f64>,
    pub threshold: f64,
    pub q: f64,
    /// `{j : |t_j| ≥ threshold}` in ascending order.
    pub selected: Vec<usize>,
    pub permutation_seed: u64,
    pub permutation_stream: u64,
    pub repetitions: usize,
    /// Set when nothing passed the threshold and the single largest `|t_j|`
    /// was kept instead.
    pub fallback: bool,
}

/// Screens with the default configuration at level `q`.
pub fn permutation_screen(data: &LabeledData, q: f64, rng: RngStream) -> Result<ScreeningResult> {
    permutation_screen_with(data, &ScreeningConfig { q, ..ScreeningConfig::default() }, rng)
}

/// Repetition `r` draws its permutation from `rng` itself for `r = 0` and
/// from `rng.child(r)` afterwards.
pub fn permutation_screen_with(data: &LabeledData, config: &ScreeningConfig, rng: RngStream) -> Result<ScreeningResult> {
    if config.repetitions == 0 {
        return Err(Error::InvalidArgument("at least one permutation is required".into()));
    }
    let perms: Vec<Vec<usize>> = (0..config.repetitions)
        .map(|r| {
            let stream = if r == 0 { rng } else { rng.child(r as u64) };
            let mut perm: Vec<usize> = (0..data.n()).collect();
            perm.shuffle(&mut stream.rng());
            perm
        })
        .collect();
    let mut res = screen_with_permutations(data, config, &perms)?;
    res.permutation_seed = rng.seed;
    res.permutation_stream = rng.stream;
    Ok(res)
}

/// Screening with caller-supplied permutations. With the identity
/// permutation the threshold is the `q` quantile of `|t|` itself.
pub fn screen_with_permutations(data: &LabeledData, config: &ScreeningConfig, perms: &[Vec<usize>]) -> Result<ScreeningResult> {
    if perms.is_empty() {
        return Err(Error::InvalidArgument("at least one permutation is required".into()));
    }
    if !(0.0..=1.0).contains(&config.q) {
        return Err(Error::InvalidArgument(format!("q must lie in [0, 1], got {}", config.q)));
    }
    let t_abs: Vec<f64> = t_statistics(data, config.variance)?.iter().map(|v| v.abs()).collect();
    let mut threshold = 0.0;
    for perm in perms {
        let null = data.with_permuted_rows(perm)?;
        let t_null: Vec<f64> = t_statistics(&null, config.variance)?.iter().map(|v| v.abs()).collect();
        threshold += empirical_quantile(&t_null, config.q)?;
    }
    threshold /= perms.len() as f64;
    let mut selected: Vec<usize> = (0..t_abs.len()).filter(|&j| t_abs[j] >= threshold).collect();
    let fallback = selected.is_empty();
    if fallback {
        selected = rank_by_abs(&t_abs, 1);
        log::warn!("no feature passed the screening threshold {threshold:.4}; keeping the top-ranked feature");
    }
    Ok(ScreeningResult {
        t_abs,
        threshold,
        q: config.q,
        selected,
        permutation_seed: 0,
        permutation_stream: 0,
        repetitions: perms.len(),
        fallback,
    })
}

/// Indices of the `k` largest values, ties to the lower index, returned in
/// ascending index order.
fn rank_by_abs(t_abs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t_abs.len()).collect();
    order.sort_by(|&a, &b| t_abs[b].total_cmp(&t_abs[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(k).collect();
    top.sort_unstable();
    top
}

/// The `k` features with the largest `|t_j|`.
pub fn top_k_screen(data: &LabeledData, k: usize, variance: TVariance) -> Result<Vec<usize>> {
    if k == 0 || k > data.p() {
        return Err(Error::InvalidArgument(format!("k must lie in [1, {}], got {k}", data.p())));
    }
    let t_abs: Vec<f64> = t_statistics(data, variance)?.iter().map(|v| v.abs()).collect();
    Ok(rank_by_abs(&t_abs, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CorrelationKind {
    /// Correlation of residuals after removing class means.
    #[default]
    WithinClass,
    /// Plain sample correlation ignoring labels.
    Raw,
}

/// Adds, for every feature in `base`, the `per_feature` features outside
/// `base` with the largest absolute correlation to it. The result lists
/// `base` first, then additions in order of discovery, without duplicates.
pub fn expand_correlated(data: &LabeledData, base: &[usize], per_feature: usize, kind: CorrelationKind) -> Result<Vec<usize>> {
    if base.is_empty() {
        return Err(Error::EmptyBase);
    }
    if per_feature == 0 {
        return Err(Error::InvalidArgument("per_feature must be at least 1".into()));
    }
    let p = data.p();
    if let Some(&bad) = base.iter().find(|&&j| j >= p) {
        return Err(Error::IndexOutOfRange { index: bad, dim: p });
    }
    let mut z = match kind {
        CorrelationKind::WithinClass => within_class_residuals(data)?,
        CorrelationKind::Raw => {
            let mut x = data.x().clone();
            for mut col in x.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            x
        }
    };
    for mut col in z.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mut in_base = vec![false; p];
    for &j in base {
        in_base[j] = true;
    }
    let mut out: Vec<usize> = Vec::with_capacity(base.len() * (1 + per_feature));
    let mut taken = in_base.clone();
    for &j in base {
        if !out.contains(&j) {
            out.push(j);
        }
    }
    for &j in base {
        let zj = z.column(j);
        let mut cands: Vec<(usize, f64)> = (0..p)
            .filter(|&k| !in_base[k])
            .map(|k| (k, z.column(k).dot(&zj).abs()))
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (k, _) in cands.into_iter().take(per_feature) {
            if !taken[k] {
                taken[k] = true;
                out.push(k);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Class;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn labels(n1: usize, n2: usize) -> Vec<Class> {
        let mut y = vec![Class::One; n1];
        y.extend(vec![Class::Two; n2]);
        y
    }

    fn gaussian_data(n_per: usize, p: usize, shift: &[f64], seed: u64) -> LabeledData {
        let mut rng = RngStream::new(seed, 5).rng();
        let n = 2 * n_per;
        let x = DMatrix::from_fn(n, p, |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            if i >= n_per {
                z + shift.get(j).copied().unwrap_or(0.0)
            } else {
                z
            }
        });
        LabeledData::new(x, labels(n_per, n_per)).unwrap()
    }

    #[test]
    fn q_one_threshold_is_max_permuted_t() {
        let data = gaussian_data(20, 30, &[1.5, 1.5], 1);
        let rng = RngStream::new(11, 0);
        let res = permutation_screen(&data, 1.0, rng).unwrap();
        let mut perm: Vec<usize> = (0..data.n()).collect();
        perm.shuffle(&mut rng.rng());
        let t_null = t_statistics(&data.with_permuted_rows(&perm).unwrap(), TVariance::Welch).unwrap();
        assert_eq!(res.threshold, t_null.amax());
        assert_eq!(res.selected, (0..30).filter(|&j| res.t_abs[j] >= res.threshold).collect::<Vec<_>>());
    }

    #[test]
    fn identity_permutation_hook() {
        let data = gaussian_data(15, 12, &[1.0], 2);
        let cfg = ScreeningConfig { q: 0.75, ..ScreeningConfig::default() };
        let id: Vec<usize> = (0..data.n()).collect();
        let res = screen_with_permutations(&data, &cfg, &[id]).unwrap();
        assert_eq!(res.threshold, empirical_quantile(&res.t_abs, 0.75).unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let data = gaussian_data(25, 40, &[1.0, 0.8, 0.6], 3);
        let a = permutation_screen(&data, 0.95, RngStream::new(4, 0)).unwrap();
        let b = permutation_screen(&data, 0.95, RngStream::new(4, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn null_data_selects_few() {
        let sizes: Vec<usize> = (0..100)
            .map(|s| {
                let data = gaussian_data(20, 100, &[], 1000 + s);
                permutation_screen(&data, 1.0, RngStream::new(s, 1)).unwrap().selected.len()
            })
            .collect();
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        assert!(sorted[50] <= 5, "median {}", sorted[50]);
    }

    #[test]
    fn column_rescaling_leaves_selection_unchanged() {
        let data = gaussian_data(20, 10, &[1.2, 0.0, 0.7], 6);
        let mut x = data.x().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= 0.1 + 3.0 * j as f64;
        }
        let scaled = LabeledData::new(x, data.y().to_vec()).unwrap();
        let a = permutation_screen(&data, 0.9, RngStream::new(1, 1)).unwrap();
        let b = permutation_screen(&scaled, 0.9, RngStream::new(1, 1)).unwrap();
        for (u, v) in a.t_abs.iter().zip(&b.t_abs) {
            assert!((u - v).abs() <= 1e-10 * u.max(1.0));
        }
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn top_k_rules() {
        let data = gaussian_data(20, 8, &[0.0, 0.0, 3.0], 7);
        assert_eq!(top_k_screen(&data, 8, TVariance::Welch).unwrap(), (0..8).collect::<Vec<_>>());
        assert_eq!(top_k_screen(&data, 1, TVariance::Welch).unwrap(), vec![2]);
        // Duplicate columns tie exactly; the lower index wins.
        let x = DMatrix::from_fn(40, 3, |i, j| data.x()[(i, if j == 2 { 1 } else { j })]);
        let dup = LabeledData::new(x, data.y().to_vec()).unwrap();
        let t = t_statistics(&dup, TVariance::Welch).unwrap();
        let winner = if t[0].abs() > t[1].abs() { 0 } else { 1 };
        assert_eq!(top_k_screen(&dup, 1, TVariance::Welch).unwrap(), vec![winner]);
        if winner == 1 {
            assert_eq!(top_k_screen(&dup, 2, TVariance::Welch).unwrap(), vec![1, 2]);
        }
        assert!(top_k_screen(&data, 0, TVariance::Welch).is_err());
    }

    #[test]
    fn expansion_picks_most_correlated() {
        let mut rng = RngStream::new(8, 0).rng();
        let n = 200;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x2 = x.clone();
        for i in 0..n {
            x2[(i, 1)] = 0.9 * x[(i, 0)] + 0.44 * x[(i, 1)];
            x2[(i, 2)] = 0.1 * x[(i, 0)] + x[(i, 2)];
        }
        let data = LabeledData::new(x2, labels(n / 2, n / 2)).unwrap();
        for kind in [CorrelationKind::WithinClass, CorrelationKind::Raw] {
            assert_eq!(expand_correlated(&data, &[0], 1, kind).unwrap(), vec![0, 1]);
        }
        assert_eq!(expand_correlated(&data, &[2, 0, 1], 1, CorrelationKind::WithinClass).unwrap(), vec![2, 0, 1]);
        assert_eq!(expand_correlated(&data, &[], 1, CorrelationKind::WithinClass), Err(Error::EmptyBase));
    }

    #[test]
    fn expansion_size_bound_and_determinism() {
        let data = gaussian_data(30, 50, &[1.0; 5], 9);
        let base = [0, 1, 2, 3, 4];
        let a = expand_correlated(&data, &base, 1, CorrelationKind::WithinClass).unwrap();
        let b = expand_correlated(&data, &base, 1, CorrelationKind::WithinClass).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 2 * base.len());
        assert_eq!(&a[..5], &base);
        let mut dedup = a.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), a.len());
    }
}
