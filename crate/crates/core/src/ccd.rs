//! Constrained coordinate descent.
//!
//! The affine constraint `w'μ_d = 1` of the ROAD program is replaced by a
//! quadratic penalty, and the surrogate
//!
//! ```text
//! f(w) = ½ w'Σw + λ‖w‖₁ + ½γ (w'μ_d − 1)²
//! ```
//!
//! is minimized by cyclic coordinate updates on a log-spaced λ grid running
//! down from `λ_max = γ‖μ_d‖∞`, each grid point warm-started from the last.
//!
//! The solver keeps `r = Σw` and `m = μ_d'w` up to date, so a coordinate that
//! does not move costs O(1) and one that moves costs a single column of Σ.
//! When the sweeps stall without meeting the KKT conditions (large γ or a
//! nearly singular Σ make coordinate steps tiny), a Newton step restricted to
//! the current orthant face is taken; it is accepted only if it lowers `f`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{soft_threshold, SymMatrix, Vector};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdConfig {
    /// Weight of the affine penalty.
    pub gamma: f64,
    /// Ratio of the smallest to the largest λ on the grid.
    pub tau: f64,
    /// Number of grid points.
    pub grid_size: usize,
    /// Convergence tolerance on the largest coordinate change in a cycle.
    pub tol: f64,
    pub max_cycles: usize,
    /// Enables the face-restricted Newton step.
    pub polish: bool,
}

impl Default for CcdConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            tau: 1e-3,
            grid_size: 100,
            tol: 1e-7,
            max_cycles: 1000,
            polish: true,
        }
    }
}

impl CcdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.grid_size < 2 {
            return bad(format!("grid size must be at least 2, got {}", self.grid_size));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_cycles == 0 {
            return bad("max_cycles must be at least 1".into());
        }
        Ok(())
    }
}

/// The quadratic part of the objective: a dense covariance, or only its
/// diagonal (the D-ROAD variant).
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceForm {
    Dense(SymMatrix),
    Diagonal(Vector),
}

impl CovarianceForm {
    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(s) => s.dim(),
            Self::Diagonal(d) => d.len(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Dense(s) => s.get(i, j),
            Self::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn diag(&self, j: usize) -> f64 {
        self.get(j, j)
    }

    /// `r += delta · Σ[:, j]`.
    #[inline]
    fn axpy_column(&self, j: usize, delta: f64, r: &mut [f64]) {
        match self {
            Self::Dense(s) => {
                for (ri, &c) in r.iter_mut().zip(s.column(j)) {
                    *ri += delta * c;
                }
            }
            Self::Diagonal(d) => r[j] += delta * d[j],
        }
    }

    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                self.axpy_column(j, wj, &mut r);
            }
        }
        r
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.dim()).map(|j| self.diag(j)).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> SymMatrix {
        match self {
            Self::Dense(s) => s.clone(),
            Self::Diagonal(d) => SymMatrix::from_diagonal(d),
        }
    }
}

/// `Σ`, `μ_d` and `γ` for one surrogate problem.
#[derive(Debug, Clone)]
pub struct CcdProblem {
    cov: CovarianceForm,
    mu_d: Vector,
    gamma: f64,
    /// `Σ_jj + γ μ_dj²`, the curvature of coordinate `j`.
    curvature: Vec<f64>,
}

impl CcdProblem {
    pub fn new(cov: CovarianceForm, mu_d: Vector, gamma: f64) -> Result<Self> {
        if cov.dim() != mu_d.len() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: mu_d.len(),
            });
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if mu_d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean difference"));
        }
        let curvature = (0..mu_d.len())
            .map(|j| cov.diag(j) + gamma * mu_d[j] * mu_d[j])
            .collect();
        Ok(Self {
            cov,
            mu_d,
            gamma,
            curvature,
        })
    }

    pub fn dense(sigma: SymMatrix, mu_d: Vector, gamma: f64) -> Result<Self> {
        Self::new(CovarianceForm::Dense(sigma), mu_d, gamma)
    }

    pub fn dim(&self) -> usize {
        self.mu_d.len()
    }

    pub fn covariance(&self) -> &CovarianceForm {
        &self.cov
    }

    pub fn mu_d(&self) -> &Vector {
        &self.mu_d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Coordinates with zero curvature can never leave zero.
    pub fn is_inactive(&self, j: usize) -> bool {
        !(self.curvature[j] > 0.0)
    }

    pub fn lambda_max(&self) -> Result<f64> {
        lambda_max(&self.mu_d, self.gamma)
    }

    /// `f(w)` evaluated from scratch.
    pub fn objective(&self, w: &[f64], lambda: f64) -> f64 {
        let r = self.cov.mul_vec(w);
        let quad: f64 = w.iter().zip(&r).map(|(a, b)| a * b).sum();
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        let t = dot(self.mu_d.as_slice(), w) - 1.0;
        0.5 * quad + lambda * l1 + 0.5 * self.gamma * t * t
    }

    /// Gradient of the smooth part, `Σw + γ(μ_d'w − 1)μ_d`.
    pub fn smooth_gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.cov.mul_vec(w);
        let t = dot(self.mu_d.as_slice(), w) - 1.0;
        r.iter()
            .zip(self.mu_d.iter())
            .map(|(ri, mj)| ri + self.gamma * t * mj)
            .collect()
    }

    /// Largest violation of the subgradient optimality conditions, in
    /// gradient units: `max(|g_j| − λ, 0)` on zero coordinates and
    /// `|g_j + λ sign(w_j)|` on nonzero ones.
    pub fn kkt_residual(&self, w: &[f64], lambda: f64) -> f64 {
        let g = self.smooth_gradient(w);
        kkt_from_gradient(&g, w, lambda, |j| self.is_inactive(j))
    }

    /// Scale the KKT tolerance is measured against.
    pub fn kkt_scale(&self, w: &[f64]) -> f64 {
        let winf = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.cov.max_diag().max(1.0) * (1.0 + winf)
    }
}

fn kkt_from_gradient(g: &[f64], w: &[f64], lambda: f64, inactive: impl Fn(usize) -> bool) -> f64 {
    let mut worst = 0.0f64;
    for (j, (&gj, &wj)) in g.iter().zip(w).enumerate() {
        if inactive(j) {
            continue;
        }
        let v = if wj == 0.0 {
            (gj.abs() - lambda).max(0.0)
        } else {
            (gj + lambda * wj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest λ at which `w = 0` is optimal: the smooth gradient at zero is
/// `−γμ_d`, so zero is stationary iff `λ ≥ γ‖μ_d‖∞`. Σ plays no role.
pub fn lambda_max(mu_d: &Vector, gamma: f64) -> Result<f64> {
    let m = mu_d.amax();
    if m == 0.0 {
        return Err(Error::ZeroMeanDifference);
    }
    Ok(gamma * m)
}

/// Exact minimizer of `f` in coordinate `j` with the others held fixed:
///
/// ```text
/// S(γμ_dj − (Σ_{j,−j} + γμ_dj μ_{d,−j}') w_{−j}, λ) / (Σ_jj + γμ_dj²)
/// ```
///
/// Reference form evaluated in O(p); the solver uses an incremental
/// equivalent.
pub fn coordinate_update(j: usize, w: &[f64], sigma: &SymMatrix, mu_d: &Vector, lambda: f64, gamma: f64) -> f64 {
    let p = w.len();
    let mut cross = 0.0;
    for k in (0..p).filter(|&k| k != j) {
        cross += (sigma.get(j, k) + gamma * mu_d[j] * mu_d[k]) * w[k];
    }
    let denom = sigma.get(j, j) + gamma * mu_d[j] * mu_d[j];
    if !(denom > 0.0) {
        return 0.0;
    }
    soft_threshold(gamma * mu_d[j] - cross, lambda) / denom
}

/// Log-spaced grid from `lambda_max` down to `tau · lambda_max`.
pub fn lambda_grid(lambda_max: f64, tau: f64, size: usize) -> Vec<f64> {
    let last = (size - 1) as f64;
    (0..size)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * tau.powf(k as f64 / last)
            }
        })
        .collect()
}

/// Solution at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub w: Vec<f64>,
    /// Number of exactly nonzero coordinates.
    pub support_size: usize,
    pub objective: f64,
    pub cycles_used: usize,
    /// False when `max_cycles` ran out; `w` is then the best iterate.
    pub converged: bool,
    pub kkt_residual: f64,
}

impl PathPoint {
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.w)
    }

    pub fn weights(&self) -> Vector {
        Vector::from_column_slice(&self.w)
    }
}

pub fn support_of(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Stable hash of problem inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemFingerprint {
    pub dim: usize,
    pub hash: u64,
}

impl ProblemFingerprint {
    pub fn of(problem: &CcdProblem) -> Self {
        let mut h = Fnv64::new();
        let p = problem.dim();
        h.write_u64(p as u64);
        h.write_u64(matches!(problem.cov, CovarianceForm::Diagonal(_)) as u64);
        for j in 0..p {
            for i in j..p {
                let v = problem.cov.get(i, j);
                if v != 0.0 || i == j {
                    h.write_u64(i as u64);
                    h.write_u64(j as u64);
                    h.write_u64(v.to_bits());
                }
            }
        }
        for v in problem.mu_d.iter() {
            h.write_u64(v.to_bits());
        }
        h.write_u64(problem.gamma.to_bits());
        Self {
            dim: p,
            hash: h.finish(),
        }
    }
}

impl fmt::Display for ProblemFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} hash={:016x}", self.dim, self.hash)
    }
}

struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Ordered solutions along a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub points: Vec<PathPoint>,
    pub config: CcdConfig,
    pub fingerprint: ProblemFingerprint,
}

impl SolutionPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }
}

/// Observer hooks for instrumented solves.
pub trait SolveObserver {
    /// Called after every coordinate update and every accepted face step.
    fn after_step(&mut self, w: &[f64]);
}

struct NoObserver;

impl SolveObserver for NoObserver {
    #[inline]
    fn after_step(&mut self, _w: &[f64]) {}
}

impl<F: FnMut(&[f64])> SolveObserver for F {
    fn after_step(&mut self, w: &[f64]) {
        self(w)
    }
}

/// Cycles between unconditional face steps.
const POLISH_INTERVAL: usize = 10;

/// Multiple of `tol` allowed on the scaled KKT residual at convergence.
pub const KKT_TOL_FACTOR: f64 = 10.0;

struct State<'a> {
    problem: &'a CcdProblem,
    lambda: f64,
    w: Vec<f64>,
    /// `Σw`.
    r: Vec<f64>,
    /// `μ_d'w`.
    m: f64,
}

impl<'a> State<'a> {
    fn new(problem: &'a CcdProblem, lambda: f64, warm: &[f64]) -> Self {
        let mut s = Self {
            problem,
            lambda,
            w: warm.to_vec(),
            r: Vec::new(),
            m: 0.0,
        };
        for j in 0..problem.dim() {
            if problem.is_inactive(j) {
                s.w[j] = 0.0;
            }
        }
        s.refresh();
        s
    }

    fn refresh(&mut self) {
        self.r = self.problem.cov.mul_vec(&self.w);
        self.m = dot(self.problem.mu_d.as_slice(), &self.w);
    }

    fn winf(&self) -> f64 {
        self.w.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn objective(&self) -> f64 {
        let pr = self.problem;
        let quad = dot(&self.w, &self.r);
        let l1: f64 = self.w.iter().map(|v| v.abs()).sum();
        let t = self.m - 1.0;
        0.5 * quad + self.lambda * l1 + 0.5 * pr.gamma * t * t
    }

    fn kkt(&self) -> f64 {
        let pr = self.problem;
        let t = self.m - 1.0;
        let g: Vec<f64> = self
            .r
            .iter()
            .zip(pr.mu_d.iter())
            .map(|(ri, mj)| ri + pr.gamma * t * mj)
            .collect();
        kkt_from_gradient(&g, &self.w, self.lambda, |j| pr.is_inactive(j))
    }

    /// One cyclic sweep in ascending coordinate order; returns the largest
    /// absolute coordinate change.
    fn sweep(&mut self, obs: &mut impl SolveObserver) -> f64 {
        let pr = self.problem;
        let gamma = pr.gamma;
        let mut max_change = 0.0f64;
        for j in 0..pr.dim() {
            let h = pr.curvature[j];
            if !(h > 0.0) {
                continue;
            }
            let wj = self.w[j];
            let mj = pr.mu_d[j];
            let sjj = pr.cov.diag(j);
            let z = gamma * mj - (self.r[j] - sjj * wj) - gamma * mj * (self.m - mj * wj);
            let new = soft_threshold(z, self.lambda) / h;
            let delta = new - wj;
            if delta != 0.0 {
                pr.cov.axpy_column(j, delta, &mut self.r);
                self.m += delta * mj;
                self.w[j] = new;
                max_change = max_change.max(delta.abs());
            }
            obs.after_step(&self.w);
        }
        max_change
    }

    /// Newton steps on the current orthant face. A step that would change a
    /// sign is clipped there, the blocking coordinates are dropped and the
    /// step is retried on the smaller face. Returns true if the objective
    /// decreased.
    fn face_step(&mut self, obs: &mut impl SolveObserver) -> bool {
        let mut improved = false;
        for _ in 0..=self.problem.dim() {
            match self.newton_on_face(obs) {
                FaceStep::Clipped => improved = true,
                FaceStep::Full => return true,
                FaceStep::Rejected => break,
            }
        }
        improved
    }

    fn newton_on_face(&mut self, obs: &mut impl SolveObserver) -> FaceStep {
        let pr = self.problem;
        let support = support_of(&self.w);
        if support.is_empty() {
            return FaceStep::Rejected;
        }
        let k = support.len();
        let mut h = nalgebra::DMatrix::zeros(k, k);
        let mut rhs = Vector::zeros(k);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate().take(a + 1) {
                let v = pr.cov.get(i, j) + pr.gamma * pr.mu_d[i] * pr.mu_d[j];
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
            rhs[a] = pr.gamma * pr.mu_d[i] - self.lambda * self.w[i].signum();
        }
        let Some(chol) = nalgebra::Cholesky::new(h) else {
            return FaceStep::Rejected;
        };
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return FaceStep::Rejected;
        }
        let mut step = 1.0f64;
        let mut blocking = Vec::new();
        for (a, &i) in support.iter().enumerate() {
            let d = target[a] - self.w[i];
            if d != 0.0 && d.signum() != self.w[i].signum() {
                let t = -self.w[i] / d;
                if t < step {
                    step = t;
                    blocking.clear();
                    blocking.push(a);
                } else if t == step {
                    blocking.push(a);
                }
            }
        }
        let before = self.objective();
        let saved = self.w.clone();
        for (a, &i) in support.iter().enumerate() {
            self.w[i] += step * (target[a] - self.w[i]);
        }
        for &a in &blocking {
            self.w[support[a]] = 0.0;
        }
        self.refresh();
        if self.objective() < before {
            obs.after_step(&self.w);
            if blocking.is_empty() {
                FaceStep::Full
            } else {
                FaceStep::Clipped
            }
        } else {
            self.w = saved;
            self.refresh();
            FaceStep::Rejected
        }
    }
}

enum FaceStep {
    Full,
    Clipped,
    Rejected,
}

/// Minimizes the surrogate at a single λ starting from `warm`.
///
/// Stops when a full cycle moves no coordinate by more than
/// `tol·(1 + ‖w‖∞)` and the KKT residual is at most
/// `10·tol·max(1, max Σ_jj)·(1 + ‖w‖∞)`. Exhausting `max_cycles` is not an
/// error: the best iterate is returned with `converged = false`.
pub fn solve_at(problem: &CcdProblem, lambda: f64, warm: &[f64], config: &CcdConfig) -> Result<PathPoint> {
    solve_at_observed(problem, lambda, warm, config, &mut NoObserver)
}

pub fn solve_at_observed(
    problem: &CcdProblem,
    lambda: f64,
    warm: &[f64],
    config: &CcdConfig,
    observer: &mut impl SolveObserver,
) -> Result<PathPoint> {
    config.validate()?;
    if warm.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: warm.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut state = State::new(problem, lambda, warm);
    let mut converged = false;
    let mut cycles = 0;
    while cycles < config.max_cycles {
        cycles += 1;
        let change = state.sweep(observer);
        let winf = state.winf();
        if change <= config.tol * (1.0 + winf) {
            state.refresh();
            let kkt_tol = KKT_TOL_FACTOR * config.tol * problem.kkt_scale(&state.w);
            if state.kkt() <= kkt_tol {
                converged = true;
                break;
            }
            if config.polish {
                state.face_step(observer);
            }
        } else if config.polish && cycles % POLISH_INTERVAL == 0 {
            state.face_step(observer);
        }
    }
    state.refresh();
    let kkt_residual = state.kkt();
    let objective = state.objective();
    let w = state.w;
    Ok(PathPoint {
        lambda,
        support_size: w.iter().filter(|v| **v != 0.0).count(),
        w,
        objective,
        cycles_used: cycles,
        converged,
        kkt_residual,
    })
}

/// Solves along `grid` (must be decreasing), warm-starting each point from
/// the previous solution.
pub fn solve_path_on_grid(problem: &CcdProblem, grid: &[f64], config: &CcdConfig) -> Result<SolutionPath> {
    config.validate()?;
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("lambda grid must be strictly decreasing".into()));
    }
    let mut warm = vec![0.0; problem.dim()];
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let pt = solve_at(problem, lambda, &warm, config)?;
        if !pt.converged {
            log::warn!(
                "coordinate descent hit max_cycles={} at lambda={lambda:.4e} (kkt residual {:.3e})",
                config.max_cycles,
                pt.kkt_residual
            );
        }
        warm.clone_from(&pt.w);
        points.push(pt);
    }
    Ok(SolutionPath {
        points,
        config: *config,
        fingerprint: ProblemFingerprint::of(problem),
    })
}

/// Full path on the default log grid from `λ_max` to `τ·λ_max`.
pub fn solve_path(problem: &CcdProblem, config: &CcdConfig) -> Result<SolutionPath> {
    config.validate()?;
    let grid = lambda_grid(problem.lambda_max()?, config.tau, config.grid_size);
    solve_path_on_grid(problem, &grid, config)
}
