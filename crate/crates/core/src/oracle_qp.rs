//! Exact small-dimension solver for
//!
//! ```text
//! minimize w'Σw  subject to  w'μ_d = 1,  ‖w‖₁ ≤ c
//! ```
//!
//! by enumerating sign patterns. For each support `S` the block `Σ_SS` is
//! factored once and every sign vector on `S` is tried against two KKT
//! systems: one with the ℓ1 budget binding and one without. Candidates whose
//! signs, multipliers and zero-block subgradient conditions check out are
//! kept and the one of least objective wins.
//!
//! The same enumeration also solves the penalized surrogate minimized by
//! [`crate::ccd`], which is how the coordinate descent is validated.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccd::{solve_path, CcdConfig, CcdProblem};
use crate::error::{Error, Result};
use crate::numerics::{soft_threshold, RngStream, SymMatrix, Vector};
use rand::Rng;

/// Largest dimension the enumeration accepts (3^12 ≈ 531k patterns).
pub const MAX_DIM: usize = 12;

/// Largest dimension accepted by [`crosscheck_ccd`].
pub const CROSSCHECK_MAX_DIM: usize = 8;

/// Relative tolerance of the KKT screens applied to candidates.
const CANDIDATE_TOL: f64 = 1e-9;

/// Lagrange multipliers of `w'Σw − α(μ_d'w − 1) + β(‖w‖₁ − c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub equality: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub c: f64,
    pub w: Vec<f64>,
    /// Whether the ℓ1 budget binds.
    pub active_l1: bool,
    /// `w'Σw`.
    pub objective: f64,
    pub sign_pattern: Vec<i8>,
    pub multipliers: Multipliers,
}

impl ExactSolution {
    pub fn weights(&self) -> Vector {
        Vector::from_column_slice(&self.w)
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.sign_pattern.len()).filter(|&j| self.sign_pattern[j] != 0).collect()
    }

    /// Pattern and binding flag together identify a linear piece of the path.
    pub fn same_piece(&self, other: &ExactSolution) -> bool {
        self.sign_pattern == other.sign_pattern && self.active_l1 == other.active_l1
    }
}

/// Smallest budget admitting a feasible point: `1/‖μ_d‖∞`.
pub fn feasibility_floor(mu_d: &Vector) -> Result<f64> {
    let m = mu_d.amax();
    if m == 0.0 {
        return Err(Error::ZeroMeanDifference);
    }
    Ok(1.0 / m)
}

fn check_inputs(sigma: &SymMatrix, mu_d: &Vector) -> Result<()> {
    if sigma.dim() != mu_d.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            found: mu_d.len(),
        });
    }
    if mu_d.is_empty() {
        return Err(Error::EmptyInput("mean difference"));
    }
    if mu_d.len() > MAX_DIM {
        return Err(Error::DimensionTooLarge {
            p: mu_d.len(),
            max: MAX_DIM,
        });
    }
    if mu_d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mean difference"));
    }
    sigma.cholesky()?;
    Ok(())
}

fn indices_of(mask: u32, p: usize) -> Vec<usize> {
    (0..p).filter(|j| mask >> j & 1 == 1).collect()
}

fn principal_block(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

fn signs_of(bits: u32, k: usize) -> Vec<f64> {
    (0..k).map(|a| if bits >> a & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

fn pattern_of(p: usize, support: &[usize], signs: &[f64]) -> Vec<i8> {
    let mut pat = vec![0i8; p];
    for (&j, &s) in support.iter().zip(signs) {
        pat[j] = s as i8;
    }
    pat
}

fn signs_match(w_s: &Vector, signs: &[f64]) -> bool {
    w_s.iter().zip(signs).all(|(w, s)| w * s > 0.0)
}

fn embed(p: usize, support: &[usize], w_s: &Vector) -> Vec<f64> {
    let mut w = vec![0.0; p];
    for (&j, &v) in support.iter().zip(w_s.iter()) {
        w[j] = v;
    }
    w
}

struct Candidate {
    solution: ExactSolution,
    /// Enumeration position; smaller wins ties.
    order: (u32, u32, u8),
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let (oa, ob) = (a.solution.objective, b.solution.objective);
            let tie = (oa - ob).abs() <= 1e-13 * oa.abs().max(ob.abs());
            if tie {
                if a.order <= b.order {
                    Some(a)
                } else {
                    Some(b)
                }
            } else if oa < ob {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

/// Enumerates supports in parallel and reduces in mask order.
fn enumerate<F>(p: usize, per_support: F) -> Option<Candidate>
where
    F: Fn(u32) -> Option<Candidate> + Sync,
{
    let per_mask: Vec<Option<Candidate>> = (1u32..(1u32 << p)).into_par_iter().map(&per_support).collect();
    per_mask.into_iter().fold(None, better)
}

/// Exact minimizer of `w'Σw` over `{w'μ_d = 1, ‖w‖₁ ≤ c}`.
pub fn exact_solve(sigma: &SymMatrix, mu_d: &Vector, c: f64) -> Result<ExactSolution> {
    check_inputs(sigma, mu_d)?;
    let floor = feasibility_floor(mu_d)?;
    if !(c.is_finite() && c >= floor * (1.0 - 1e-12)) {
        return Err(Error::Infeasible { c, floor });
    }
    let p = mu_d.len();
    let s_full = sigma.as_matrix();
    let best = enumerate(p, |mask| {
        let support = indices_of(mask, p);
        let k = support.len();
        let chol = Cholesky::new(principal_block(s_full, &support))?;
        let mu_s = Vector::from_iterator(k, support.iter().map(|&j| mu_d[j]));
        let a = chol.solve(&mu_s);
        let mu_a = mu_s.dot(&a);
        if !(mu_a > 0.0) {
            return None;
        }
        let mut best = None;
        for bits in 0..(1u32 << k) {
            let signs = signs_of(bits, k);
            let ctx = PatternCtx {
                sigma: s_full,
                mu_d,
                c,
                support: &support,
                signs: &signs,
                chol: &chol,
                a: &a,
                mu_a,
            };
            if let Some(sol) = ctx.free_branch() {
                best = better(best, Some(Candidate { solution: sol, order: (mask, bits, 0) }));
            }
            if let Some(sol) = ctx.binding_branch() {
                best = better(best, Some(Candidate { solution: sol, order: (mask, bits, 1) }));
            }
        }
        best
    });
    best.map(|c| c.solution).ok_or(Error::NoKktCandidate)
}

struct PatternCtx<'a> {
    sigma: &'a DMatrix<f64>,
    mu_d: &'a Vector,
    c: f64,
    support: &'a [usize],
    signs: &'a [f64],
    chol: &'a Cholesky<f64, Dyn>,
    /// `Σ_SS⁻¹ μ_S`.
    a: &'a Vector,
    mu_a: f64,
}

impl PatternCtx<'_> {
    fn p(&self) -> usize {
        self.mu_d.len()
    }

    /// `max_{j∉S} |α μ_j − 2(Σw)_j|`, the zero-block subgradient demand.
    fn zero_block_demands(&self, w: &[f64], alpha: f64) -> Vec<f64> {
        let p = self.p();
        let in_s: Vec<bool> = (0..p).map(|j| self.support.contains(&j)).collect();
        (0..p)
            .filter(|&j| !in_s[j])
            .map(|j| {
                let sw: f64 = self.support.iter().map(|&i| self.sigma[(j, i)] * w[i]).sum();
                alpha * self.mu_d[j] - 2.0 * sw
            })
            .collect()
    }

    fn tol(&self, alpha: f64, beta: f64) -> f64 {
        CANDIDATE_TOL * (1.0 + alpha.abs() * self.mu_d.amax() + beta.abs())
    }

    fn finish(&self, w_s: &Vector, alpha: f64, beta: f64, active: bool) -> ExactSolution {
        let p = self.p();
        let w = embed(p, self.support, w_s);
        let wv = Vector::from_column_slice(&w);
        let objective = (self.sigma * &wv).dot(&wv);
        ExactSolution {
            c: self.c,
            w,
            active_l1: active,
            objective,
            sign_pattern: pattern_of(p, self.support, self.signs),
            multipliers: Multipliers {
                equality: alpha,
                l1: beta,
            },
        }
    }

    /// ℓ1 budget slack: the Fisher direction on `S`.
    fn free_branch(&self) -> Option<ExactSolution> {
        let w_s = self.a / self.mu_a;
        if !signs_match(&w_s, self.signs) {
            return None;
        }
        if w_s.lp_norm(1) > self.c * (1.0 + 1e-12) {
            return None;
        }
        let alpha = 2.0 / self.mu_a;
        let w = embed(self.p(), self.support, &w_s);
        let tol = self.tol(alpha, 0.0);
        if self.zero_block_demands(&w, alpha).iter().any(|g| g.abs() > tol) {
            return None;
        }
        Some(self.finish(&w_s, alpha, 0.0, false))
    }

    /// ℓ1 budget binding: `2Σ_SS w = αμ_S − βs`, `μ_S'w = 1`, `s'w = c`.
    fn binding_branch(&self) -> Option<ExactSolution> {
        let k = self.support.len();
        let s = Vector::from_column_slice(self.signs);
        let b = self.chol.solve(&s);
        let mu_b = Vector::from_iterator(k, self.support.iter().map(|&j| self.mu_d[j])).dot(&b);
        let s_b = s.dot(&b);
        let det = mu_b * mu_b - self.mu_a * s_b;
        if det.abs() > 1e-10 * self.mu_a * s_b {
            // [μ'a  −μ'b] [α]   [2 ]
            // [s'a  −s'b] [β] = [2c],  with s'a = μ'b.
            let alpha = 2.0 * (mu_b * self.c - s_b) / det;
            let beta = 2.0 * (self.mu_a * self.c - mu_b) / det;
            let tol = self.tol(alpha, beta);
            if beta < -tol {
                return None;
            }
            let w_s = (self.a * alpha - &b * beta) / 2.0;
            if !signs_match(&w_s, self.signs) {
                return None;
            }
            let w = embed(self.p(), self.support, &w_s);
            if self.zero_block_demands(&w, alpha).iter().any(|g| g.abs() > beta.max(0.0) + tol) {
                return None;
            }
            return Some(self.finish(&w_s, alpha, beta.max(0.0), true));
        }
        self.parallel_binding(&b, s_b)
    }

    /// `μ_S = κ s` on the support, which always happens for singletons. Both
    /// constraints then fix `w_S = (c / s'b) b`, consistent only when
    /// `κc = 1`, and one multiplier degree of freedom remains:
    /// `α = (2θ + β)/κ` with `θ = c / s'b`. A `β ≥ 0` meeting every
    /// zero-block condition is sought by intersecting half-lines.
    fn parallel_binding(&self, b: &Vector, s_b: f64) -> Option<ExactSolution> {
        let j0 = self.support[0];
        let kappa = self.mu_d[j0] * self.signs[0];
        if !(kappa > 0.0) || (kappa * self.c - 1.0).abs() > 1e-10 {
            return None;
        }
        let theta = self.c / s_b;
        let w_s = b * theta;
        if !signs_match(&w_s, self.signs) {
            return None;
        }
        let w = embed(self.p(), self.support, &w_s);
        // Demand g_j(β) = A_j + β B_j must satisfy |g_j| ≤ β.
        let base = self.zero_block_demands(&w, 2.0 * theta / kappa);
        let slopes: Vec<f64> = (0..self.p())
            .filter(|j| !self.support.contains(j))
            .map(|j| self.mu_d[j] / kappa)
            .collect();
        let tol = self.tol(2.0 * theta / kappa, 0.0);
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for (&a_j, &b_j) in base.iter().zip(&slopes) {
            // A ≤ β(1 − B) and −A ≤ β(1 + B).
            for (lhs, coef) in [(a_j, 1.0 - b_j), (-a_j, 1.0 + b_j)] {
                if coef > 1e-15 {
                    lo = lo.max(lhs / coef);
                } else if coef < -1e-15 {
                    hi = hi.min(lhs / coef);
                } else if lhs > tol {
                    return None;
                }
            }
        }
        if lo > hi + tol {
            return None;
        }
        let beta = lo;
        Some(self.finish(&w_s, (2.0 * theta + beta) / kappa, beta, true))
    }
}

/// Residuals of the optimality conditions for a claimed solution, each
/// scaled by `1 + |α|‖μ_d‖∞ + β` where gradient units are involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub equality: f64,
    pub budget_excess: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.equality,
            self.budget_excess,
            self.dual_sign,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks a solution against the optimality conditions directly from `w`
/// and its multipliers, without reusing any enumeration state.
pub fn verify_kkt(sigma: &SymMatrix, mu_d: &Vector, c: f64, sol: &ExactSolution) -> KktReport {
    let w = sol.weights();
    let alpha = sol.multipliers.equality;
    let beta = sol.multipliers.l1;
    let scale = 1.0 + alpha.abs() * mu_d.amax() + beta.abs();
    let grad = sigma.mul_vec(&w) * 2.0 - mu_d * alpha;
    let mut stationarity = 0.0f64;
    for j in 0..w.len() {
        let v = if w[j] != 0.0 {
            (grad[j] + beta * w[j].signum()).abs()
        } else {
            (grad[j].abs() - beta).max(0.0)
        };
        stationarity = stationarity.max(v / scale);
    }
    let l1 = w.lp_norm(1);
    KktReport {
        stationarity,
        equality: (w.dot(mu_d) - 1.0).abs(),
        budget_excess: (l1 - c).max(0.0),
        dual_sign: (-beta).max(0.0) / scale,
        complementarity: (beta * (c - l1)).abs() / scale,
    }
}

/// Exact solutions along an ascending budget grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPath {
    pub solutions: Vec<ExactSolution>,
    /// Indices `i` such that solutions `i − 1` and `i` lie on different
    /// linear pieces.
    pub breakpoints: Vec<usize>,
}

pub fn exact_path(sigma: &SymMatrix, mu_d: &Vector, c_grid: &[f64]) -> Result<ExactPath> {
    if c_grid.is_empty() {
        return Err(Error::EmptyInput("budget grid"));
    }
    if c_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("budget grid must be strictly increasing".into()));
    }
    let solutions = c_grid
        .iter()
        .map(|&c| exact_solve(sigma, mu_d, c))
        .collect::<Result<Vec<_>>>()?;
    let breakpoints = (1..solutions.len())
        .filter(|&i| !solutions[i].same_piece(&solutions[i - 1]))
        .collect();
    Ok(ExactPath { solutions, breakpoints })
}

/// For consecutive grid points on the same piece, the distance between the
/// exact solution at the midpoint budget and the average of the endpoints.
pub fn midpoint_residuals(sigma: &SymMatrix, mu_d: &Vector, path: &ExactPath) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for pair in path.solutions.windows(2) {
        let (l, r) = (&pair[0], &pair[1]);
        if !l.same_piece(r) {
            continue;
        }
        let mid = exact_solve(sigma, mu_d, 0.5 * (l.c + r.c))?;
        let avg = (l.weights() + r.weights()) * 0.5;
        out.push((mid.weights() - avg).norm());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakpointJump {
    pub c_left: f64,
    pub c_right: f64,
    /// `‖w(c_right) − w(c_left)‖₂` across the refined bracket.
    pub jump: f64,
}

/// Refines every breakpoint of `path` by bisection down to `width` and
/// reports the change in `w` across the final bracket.
pub fn breakpoint_jumps(sigma: &SymMatrix, mu_d: &Vector, path: &ExactPath, width: f64) -> Result<Vec<BreakpointJump>> {
    let mut out = Vec::with_capacity(path.breakpoints.len());
    for &i in &path.breakpoints {
        let mut left = path.solutions[i - 1].clone();
        let mut right = path.solutions[i].clone();
        while right.c - left.c > width {
            let mid_c = 0.5 * (left.c + right.c);
            if mid_c <= left.c || mid_c >= right.c {
                break;
            }
            let mid = exact_solve(sigma, mu_d, mid_c)?;
            if mid.same_piece(&left) {
                left = mid;
            } else {
                right = mid;
            }
        }
        out.push(BreakpointJump {
            c_left: left.c,
            c_right: right.c,
            jump: (right.weights() - left.weights()).norm(),
        });
    }
    Ok(out)
}

/// Exact minimizer of `½w'Σw + λ‖w‖₁ + ½γ(w'μ_d − 1)²`.
pub fn exact_penalized(sigma: &SymMatrix, mu_d: &Vector, lambda: f64, gamma: f64) -> Result<Vec<f64>> {
    check_inputs(sigma, mu_d)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let p = mu_d.len();
    if gamma * mu_d.amax() <= lambda {
        return Ok(vec![0.0; p]);
    }
    let h = sigma.as_matrix() + mu_d * mu_d.transpose() * gamma;
    let objective = |w: &Vector| {
        let t = w.dot(mu_d) - 1.0;
        0.5 * sigma.quad_form(w) + lambda * w.lp_norm(1) + 0.5 * gamma * t * t
    };
    let best = enumerate(p, |mask| {
        let support = indices_of(mask, p);
        let k = support.len();
        let chol = Cholesky::new(principal_block(&h, &support))?;
        let mu_s = Vector::from_iterator(k, support.iter().map(|&j| mu_d[j]));
        let base = chol.solve(&mu_s) * gamma;
        let mut best = None;
        for bits in 0..(1u32 << k) {
            let signs = signs_of(bits, k);
            let w_s = &base - chol.solve(&Vector::from_column_slice(&signs)) * lambda;
            if !signs_match(&w_s, &signs) {
                continue;
            }
            let w = Vector::from_column_slice(&embed(p, &support, &w_s));
            let g = &h * &w - mu_d * gamma;
            let tol = CANDIDATE_TOL * (1.0 + gamma * mu_d.amax());
            let zero_ok = (0..p).filter(|j| w[*j] == 0.0).all(|j| g[j].abs() <= lambda + tol);
            if !zero_ok {
                continue;
            }
            let obj = objective(&w);
            let sol = ExactSolution {
                c: w.lp_norm(1),
                w: w.as_slice().to_vec(),
                active_l1: false,
                objective: obj,
                sign_pattern: pattern_of(p, &support, &signs),
                multipliers: Multipliers { equality: 0.0, l1: lambda },
            };
            best = better(best, Some(Candidate { solution: sol, order: (mask, bits, 0) }));
        }
        best
    });
    best.map(|c| c.solution.w).ok_or(Error::NoKktCandidate)
}

/// Closed-form surrogate minimizer for `Σ = I`: `w_j = S(κμ_j, λ)` where
/// `κ = γ(1 − μ_d'w)` is the unique root of a monotone scalar equation.
pub fn identity_penalized_solution(mu_d: &Vector, lambda: f64, gamma: f64) -> Vec<f64> {
    let w_of = |kappa: f64| -> Vec<f64> { mu_d.iter().map(|&m| soft_threshold(kappa * m, lambda)).collect() };
    let excess = |kappa: f64| -> f64 {
        let m: f64 = mu_d.iter().zip(w_of(kappa)).map(|(a, b)| a * b).sum();
        kappa - gamma * (1.0 - m)
    };
    let (mut lo, mut hi) = (0.0, gamma);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    w_of(0.5 * (lo + hi))
}

/// Seeded test instance: `Σ = GG' + 0.2·I` with `G` and `μ_d` uniform on
/// `[−1, 1]`.
pub fn random_instance(p: usize, rng: RngStream) -> (SymMatrix, Vector) {
    let mut rng = rng.rng();
    let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    let sigma = SymMatrix::new(&g * g.transpose() + 0.2 * DMatrix::identity(p, p)).expect("GG' + 0.2I is symmetric");
    let mu = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    (sigma, mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRow {
    pub lambda: f64,
    /// `‖v‖₁` of the rescaled coordinate-descent solution.
    pub c_prime: f64,
    pub ccd_objective: f64,
    pub exact_objective: f64,
    pub rel_gap: f64,
    pub support_size: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub rows: Vec<CrosscheckRow>,
    /// Path points with `w = 0`, which have no rescaled counterpart.
    pub skipped_zero: usize,
    pub max_rel_gap: f64,
}

/// Runs the coordinate-descent path with `config` and compares every
/// nonzero point, rescaled to `v = w/(w'μ_d)`, against the exact constrained
/// optimum at budget `‖v‖₁`.
pub fn crosscheck_ccd(sigma: &SymMatrix, mu_d: &Vector, config: &CcdConfig) -> Result<CrosscheckReport> {
    if mu_d.len() > CROSSCHECK_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            p: mu_d.len(),
            max: CROSSCHECK_MAX_DIM,
        });
    }
    check_inputs(sigma, mu_d)?;
    let floor = feasibility_floor(mu_d)?;
    let problem = CcdProblem::dense(sigma.clone(), mu_d.clone(), config.gamma)?;
    let path = solve_path(&problem, config)?;
    let mut rows = Vec::new();
    let mut skipped_zero = 0;
    for pt in &path.points {
        let w = pt.weights();
        let t = w.dot(mu_d);
        if pt.support_size == 0 || !(t > 0.0) {
            skipped_zero += 1;
            continue;
        }
        let v = w / t;
        let c_prime = v.lp_norm(1).max(floor);
        let exact = exact_solve(sigma, mu_d, c_prime)?;
        let ccd_objective = sigma.quad_form(&v);
        let rel_gap = ((ccd_objective - exact.objective) / exact.objective).abs();
        rows.push(CrosscheckRow {
            lambda: pt.lambda,
            c_prime,
            ccd_objective,
            exact_objective: exact.objective,
            rel_gap,
            support_size: pt.support_size,
            converged: pt.converged,
        });
    }
    let max_rel_gap = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    Ok(CrosscheckReport {
        rows,
        skipped_zero,
        max_rel_gap,
    })
}
