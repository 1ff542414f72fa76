//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails.
//!
//! Run with `cargo test -p road-core --test acceptance`. Pass `-- --full` to
//! add the full-scale equicorrelation sweep (several hours). The master seed
//! is read from `ROAD_SEED` (default 0).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use road_core::ccd::{lambda_grid, solve_at_observed, solve_path, CcdConfig, CcdProblem, KKT_TOL_FACTOR};
use road_core::numerics::{gaussian_sf, sym_solve, RngStream, SymMatrix, Vector};
use road_core::oracle_qp::{breakpoint_jumps, crosscheck_ccd, exact_path, feasibility_floor, midpoint_residuals};
use road_core::population::{efficiency_ratio_equal_loading, two_feature_delta, Equicorrelation};
use road_core::road::{FitConfig, Method};
use road_core::simulation::{
    gamma_sensitivity, render_gamma_table, render_table, run_experiment, table_rho_grid, ExperimentReport, Scenario,
    DESK_N, DESK_P, DESK_REPLICATIONS, FULL_N, FULL_P, FULL_REPLICATIONS, GAMMA_GRID,
};

const REFERENCE_ORACLE_PCT: [f64; 10] = [5.5, 5.0, 4.0, 3.2, 2.0, 1.3, 0.7, 0.2, 0.0, 0.0];
const REFERENCE_ROAD_PCT: [f64; 10] = [6.0, 6.3, 5.3, 4.2, 3.2, 2.0, 1.0, 0.3, 0.0, 0.0];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

struct Suite {
    seed: u64,
    out_dir: PathBuf,
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: &str, title: &str, limit_secs: f64, f: impl FnOnce(&Suite) -> Result<Outcome, String>) {
        let start = Instant::now();
        let outcome = f(self).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= limit_secs;
        let pass = outcome.pass && in_time;
        if !pass {
            self.failures += 1;
        }
        let timing = if in_time {
            format!("{secs:.1}s")
        } else {
            format!("{secs:.1}s exceeds {limit_secs:.0}s")
        };
        println!(
            "{} criterion {id}: {title}: {} [{timing}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }

    fn rng(&self, tag: u64) -> RngStream {
        RngStream::new(self.seed, 0).child(tag)
    }

    fn report_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(format!("seed{}_{name}", self.seed))
    }
}

fn random_spd(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::new(&g * g.transpose() + 0.2 * DMatrix::identity(p, p)).expect("spd")
}

fn random_vector(p: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn oracle_column(_: &Suite) -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    for (rho, reference) in table_rho_grid().into_iter().zip(REFERENCE_ORACLE_PCT) {
        let eq = Equicorrelation::new(1000, rho).map_err(err)?;
        let delta = eq.inv_quad(5.0, 2.5);
        let pct = 100.0 * gaussian_sf(delta.sqrt());
        worst = worst.max((pct - reference).abs());
    }
    Ok(Outcome::new(worst <= 0.5, format!("max |analytic - reference| = {worst:.3} pp (tol 0.5)")))
}

fn anchors(_: &Suite) -> Result<Outcome, String> {
    let e05 = 100.0 * gaussian_sf(0.5);
    let e15 = 100.0 * gaussian_sf(1.5);
    let printed_ok = format!("{e05:.1}") == "30.9" && format!("{e15:.1}") == "6.7";
    let g12 = two_feature_delta([4.0, 0.5], -0.25).map_err(err)?;
    let g13 = two_feature_delta([4.0, 1.0], 0.0).map_err(err)?;
    let gamma_ok = (g12 - 18.4).abs() <= 1e-10 && (g13 - 17.0).abs() <= 1e-10;
    let c = 2.0 / 11.0;
    let ratio = efficiency_ratio_equal_loading(&[c, 2.0 - c]).map_err(err)?;
    let ratio_ok = (ratio - 3.025).abs() <= 1e-12;
    Ok(Outcome::new(
        printed_ok && gamma_ok && ratio_ok,
        format!("errors {e05:.2}%/{e15:.2}%, G12 = {g12:.12}, G13 = {g13:.12}, ratio(cond 10) = {ratio:.6}"),
    ))
}

fn oracle_equivalence(suite: &Suite) -> Result<Outcome, String> {
    let base = suite.rng(3);
    let config = CcdConfig {
        gamma: 1e6,
        ..CcdConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for i in 0..50u64 {
        let p = 2 + (i % 5) as usize;
        let mut rng = base.with_stream(i).rng();
        let sigma = random_spd(p, &mut rng);
        let mu = random_vector(p, &mut rng);
        let report = crosscheck_ccd(&sigma, &mu, &config).map_err(err)?;
        worst = worst.max(report.max_rel_gap);
        rows += report.rows.len();
    }
    Ok(Outcome::new(
        worst <= 1e-4,
        format!("max relative objective gap {worst:.2e} over {rows} path points (tol 1e-4)"),
    ))
}

fn path_linearity(suite: &Suite) -> Result<Outcome, String> {
    let base = suite.rng(4);
    let mut worst_mid: f64 = 0.0;
    let mut worst_jump: f64 = 0.0;
    let mut breaks = 0;
    for i in 0..20u64 {
        let p = 2 + (i % 4) as usize;
        let mut rng = base.with_stream(i).rng();
        let sigma = random_spd(p, &mut rng);
        let mu = random_vector(p, &mut rng);
        let floor = feasibility_floor(&mu).map_err(err)?;
        let fisher = sym_solve(&sigma, &mu).map_err(err)?;
        let top = 1.1 * fisher.lp_norm(1) / fisher.dot(&mu);
        let lo = floor * (1.0 + 1e-6);
        let n = 400;
        let grid: Vec<f64> = (0..n).map(|k| lo + (top - lo) * k as f64 / (n - 1) as f64).collect();
        let path = exact_path(&sigma, &mu, &grid).map_err(err)?;
        let mids = midpoint_residuals(&sigma, &mu, &path).map_err(err)?;
        worst_mid = mids.into_iter().fold(worst_mid, f64::max);
        let jumps = breakpoint_jumps(&sigma, &mu, &path, 1e-12).map_err(err)?;
        breaks += jumps.len();
        worst_jump = jumps.iter().map(|j| j.jump).fold(worst_jump, f64::max);
    }
    Ok(Outcome::new(
        worst_mid <= 1e-8 && worst_jump <= 1e-6,
        format!("max midpoint residual {worst_mid:.2e} (tol 1e-8), max jump {worst_jump:.2e} over {breaks} breakpoints (tol 1e-6)"),
    ))
}

fn theorem2(suite: &Suite) -> Result<Outcome, String> {
    let base = suite.rng(5);
    let config = CcdConfig {
        gamma: 1e6,
        tau: 1e-9,
        ..CcdConfig::default()
    };
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut checked = 0;
    for i in 0..20u64 {
        let p = 2 + (i % 5) as usize;
        let mut rng = base.with_stream(i).rng();
        let sigma = random_spd(p, &mut rng);
        let s = 1 + rng.random_range(0..p);
        let beta = Vector::from_fn(p, |j, _| {
            if j < s {
                rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                0.0
            }
        });
        let mu = sigma.mul_vec(&beta);
        let w_inf = &beta / beta.dot(&mu);
        let lambda_min = sigma.as_matrix().symmetric_eigenvalues().min();
        let problem = CcdProblem::dense(sigma.clone(), mu.clone(), config.gamma).map_err(err)?;
        let path = solve_path(&problem, &config).map_err(err)?;
        for pt in &path.points {
            let w = pt.weights();
            let t = w.dot(&mu);
            if pt.support_size == 0 || t <= 0.0 || t.is_nan() {
                continue;
            }
            let v = &w / t;
            let lambda16 = 2.0 * pt.lambda / t;
            let bound = lambda16 * (s as f64).sqrt() / lambda_min + 1e-3;
            let dist = (v - &w_inf).norm();
            worst_slack = worst_slack.max(dist - bound);
            worst_ratio = worst_ratio.max(dist / bound);
            checked += 1;
        }
    }
    Ok(Outcome::new(
        worst_slack <= 0.0 && checked > 0,
        format!("max (distance - bound) = {worst_slack:.3e}, max distance/bound = {worst_ratio:.3} over {checked} path points"),
    ))
}

fn kkt_residual(sigma: &SymMatrix, mu: &Vector, gamma: f64, w: &Vector, lambda: f64) -> f64 {
    let g = sigma.mul_vec(w) + mu * (gamma * (w.dot(mu) - 1.0));
    (0..w.len())
        .map(|j| {
            if w[j] != 0.0 {
                (g[j] + lambda * w[j].signum()).abs()
            } else {
                (g[j].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn descent_and_kkt(suite: &Suite) -> Result<Outcome, String> {
    let base = suite.rng(6);
    let gammas = [1.0, 10.0, 1e3];
    let mut updates: u64 = 0;
    let mut violations: u64 = 0;
    let mut converged = 0;
    let mut kkt_failures = 0;
    let mut instance = 0u64;
    while updates < 1_000_000 {
        let mut rng = base.with_stream(instance).rng();
        let p = 10 + (instance % 21) as usize;
        let gamma = gammas[(instance % 3) as usize];
        instance += 1;
        let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let sigma = SymMatrix::new(&g * g.transpose() / p as f64 + 0.05 * DMatrix::identity(p, p)).map_err(err)?;
        let mu = random_vector(p, &mut rng);
        let config = CcdConfig {
            gamma,
            tol: 1e-9,
            ..CcdConfig::default()
        };
        let problem = CcdProblem::dense(sigma.clone(), mu.clone(), gamma).map_err(err)?;
        let grid = lambda_grid(problem.lambda_max().map_err(err)?, config.tau, config.grid_size);
        let mut warm = vec![0.0; p];
        for &lambda in &grid {
            let mut prev = problem.objective(&warm, lambda);
            let mut observer = |w: &[f64]| {
                let f = problem.objective(w, lambda);
                updates += 1;
                if f > prev + 1e-12 * prev.abs().max(1.0) {
                    violations += 1;
                }
                prev = f;
            };
            let pt = solve_at_observed(&problem, lambda, &warm, &config, &mut observer).map_err(err)?;
            if pt.converged {
                converged += 1;
                let w = pt.weights();
                let tol = KKT_TOL_FACTOR * config.tol * problem.kkt_scale(&pt.w);
                if kkt_residual(&sigma, &mu, gamma, &w, lambda) > tol {
                    kkt_failures += 1;
                }
            }
            warm = pt.w;
        }
    }
    Ok(Outcome::new(
        violations == 0 && kkt_failures == 0 && converged > 0,
        format!(
            "{violations} descent violations over {updates} updates; {kkt_failures} KKT failures over {converged} converged points ({instance} problems)"
        ),
    ))
}

fn write_report(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()))
}

fn median_of(rep: &ExperimentReport, m: Method) -> Result<f64, String> {
    rep.median_error_pct(m).ok_or_else(|| format!("{m} missing from report"))
}

fn equicorr_desk(suite: &Suite, rho: f64) -> Result<ExperimentReport, String> {
    let scenario = Scenario::equicorrelation(DESK_P, DESK_N, rho);
    run_experiment(
        &scenario,
        &[Method::Road, Method::Droad, Method::Nb],
        DESK_REPLICATIONS,
        &FitConfig::default(),
        suite.rng(7),
    )
    .map_err(err)
}

fn desk_equicorr(suite: &Suite) -> Result<Outcome, String> {
    let r0 = equicorr_desk(suite, 0.0)?;
    let r5 = equicorr_desk(suite, 0.5)?;
    let table = render_table("rho", &[("0".into(), r0.clone()), ("0.5".into(), r5.clone())]);
    write_report(&suite.report_path("equicorr_desk.csv"), &table)?;
    let (road5, droad5, nb5) = (median_of(&r5, Method::Road)?, median_of(&r5, Method::Droad)?, median_of(&r5, Method::Nb)?);
    let (road0, droad0) = (median_of(&r0, Method::Road)?, median_of(&r0, Method::Droad)?);
    let ordered = road5 < droad5 && road5 < nb5;
    let close = (road0 - droad0).abs() <= 3.0;
    Ok(Outcome::new(
        ordered && close && r0.failed == 0 && r5.failed == 0,
        format!(
            "rho=0.5 ROAD {road5:.2} vs D-ROAD {droad5:.2}, NB {nb5:.2}; rho=0 ROAD {road0:.2} vs D-ROAD {droad0:.2} (gap tol 3 pp)"
        ),
    ))
}

fn full_equicorr(suite: &Suite) -> Result<Outcome, String> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (rho, reference) in table_rho_grid().into_iter().zip(REFERENCE_ROAD_PCT) {
        let scenario = Scenario::equicorrelation(FULL_P, FULL_N, rho);
        let rep = run_experiment(
            &scenario,
            &[Method::Road, Method::Droad, Method::Nb],
            FULL_REPLICATIONS,
            &FitConfig::default(),
            suite.rng(70),
        )
        .map_err(err)?;
        worst = worst.max((median_of(&rep, Method::Road)? - reference).abs());
        rows.push((format!("{rho}"), rep));
    }
    write_report(&suite.report_path("equicorr_full.csv"), &render_table("rho", &rows))?;
    Ok(Outcome::new(worst <= 1.5, format!("max |ROAD - reference| = {worst:.2} pp (tol 1.5)")))
}

fn block_screening(suite: &Suite) -> Result<Outcome, String> {
    let scenario = Scenario::block_diagonal(DESK_P, DESK_N, 0.5);
    let rep = run_experiment(
        &scenario,
        &[Method::Sroad1, Method::Sroad2],
        DESK_REPLICATIONS,
        &FitConfig::default(),
        suite.rng(8),
    )
    .map_err(err)?;
    write_report(&suite.report_path("block_desk.csv"), &render_table("rho", &[("0.5".into(), rep.clone())]))?;
    let (s1, s2) = (median_of(&rep, Method::Sroad1)?, median_of(&rep, Method::Sroad2)?);
    Ok(Outcome::new(
        s2 < s1 && rep.failed == 0,
        format!("S-ROAD2 {s2:.2} vs S-ROAD1 {s1:.2}"),
    ))
}

fn gamma_spread(suite: &Suite) -> Result<Outcome, String> {
    let scenario = Scenario::equicorrelation(DESK_P, DESK_N, 0.0);
    let rows = gamma_sensitivity(&scenario, &GAMMA_GRID, DESK_REPLICATIONS, &FitConfig::default(), suite.rng(9))
        .map_err(err)?;
    write_report(&suite.report_path("gamma_desk.csv"), &render_gamma_table(&rows))?;
    let meds: Vec<f64> = rows.iter().map(|r| r.median_error_pct).collect();
    let hi = meds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = meds.iter().cloned().fold(f64::INFINITY, f64::min);
    let complete = rows.iter().all(|r| r.completed == DESK_REPLICATIONS);
    Ok(Outcome::new(
        hi - lo <= 2.0 && complete,
        format!("medians {meds:.2?}, spread {:.2} pp (tol 2)", hi - lo),
    ))
}

fn reproducibility(suite: &Suite) -> Result<Outcome, String> {
    let render = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
        let rep = pool.install(|| equicorr_desk(suite, 0.5))?;
        Ok(render_table("rho", &[("0.5".into(), rep)]))
    };
    let single = render(1)?;
    let multi = render(4)?;
    let path_single = suite.report_path("repro_threads1.csv");
    let path_multi = suite.report_path("repro_threads4.csv");
    let previous = fs::read(&path_multi).ok();
    write_report(&path_single, &single)?;
    write_report(&path_multi, &multi)?;
    let same_threads = fs::read(&path_single).map_err(err)? == fs::read(&path_multi).map_err(err)?;
    let same_previous = previous.as_deref().is_none_or(|prev| prev == multi.as_bytes());
    let desk = fs::read_to_string(suite.report_path("equicorr_desk.csv")).map_err(err)?;
    let row = multi.lines().nth(1).unwrap_or_default();
    let same_as_suite = desk.lines().any(|l| l == row);
    let previous_note = if previous.is_some() { "matches previous run" } else { "no previous run on disk" };
    Ok(Outcome::new(
        same_threads && same_previous && same_as_suite,
        format!(
            "1 vs 4 threads identical: {same_threads}; matches criterion 7 report: {same_as_suite}; {previous_note}: {same_previous}"
        ),
    ))
}

fn main() {
    let full = std::env::args().any(|a| a == "--full");
    let seed = std::env::var("ROAD_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&out_dir).expect("create report directory");
    println!("acceptance suite: seed {seed}, reports in {}", out_dir.display());
    let mut suite = Suite {
        seed,
        out_dir,
        failures: 0,
    };
    suite.run("1", "analytic oracle column", 1.0, oracle_column);
    suite.run("2", "anchor values", 1.0, anchors);
    suite.run("3", "coordinate descent vs exact oracle", 120.0, oracle_equivalence);
    suite.run("4", "piecewise-linear exact path", 120.0, path_linearity);
    suite.run("5", "limit bound along the path", 120.0, theorem2);
    suite.run("6", "descent and KKT invariants", f64::INFINITY, descent_and_kkt);
    suite.run("7", "desk-scale equicorrelation ordering", 1800.0, desk_equicorr);
    if full {
        suite.run("7-full", "full-scale equicorrelation sweep", f64::INFINITY, full_equicorr);
    }
    suite.run("8", "block-diagonal screening contrast", 1800.0, block_screening);
    suite.run("9", "gamma insensitivity", 2700.0, gamma_spread);
    suite.run("10", "byte-identical reports", f64::INFINITY, reproducibility);
    if suite.failures > 0 {
        println!("{} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
