use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use road_core::ccd::solve_path;
use road_core::ccd::CcdConfig;
use road_core::estimation::{estimate, standardize_rows, standardize_samples, LabeledData, VarianceDenominator};
use road_core::numerics::RngStream;
use road_core::oracle_qp::{crosscheck_ccd, exact_solve, random_instance};
use road_core::population::figure1_table;
use road_core::road::{build_problem, confusion, estimate_error, CovarianceKind};
use road_core::screening::{expand_correlated, permutation_screen_with, CorrelationKind, ScreeningConfig};
use road_core::simulation::{
    fit_with_cv, fmt_sig, gamma_sensitivity, render_gamma_study, render_table, run_experiment, table_rho_grid,
    Scenario, DESK_N, DESK_P, DESK_REPLICATIONS, FULL_N, FULL_P, FULL_REPLICATIONS, GAMMA_GRID,
};
use serde::Serialize;

use crate::cli::{
    CovarianceChoice, FitArgs, OracleArgs, PathArgs, PredictArgs, ScenarioChoice, ScreenArgs, SimulateArgs, TheoryArgs,
};
use crate::data::read_table;
use crate::error::{CliError, CliResult};
use crate::model::{ModelFile, MODEL_VERSION};

/// Screening stream of the S-ROAD fits, reused so `screen` reports the same
/// selection.
const SCREEN_TAG: u64 = 2;

/// `# config: {...}` line carrying the command, seed and resolved flags.
fn config_json(command: &str, seed: u64, args: &impl Serialize) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "args": args,
    })
}

fn header(config: &serde_json::Value) -> String {
    format!("# config: {config}\n")
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn load_labeled(path: &Path, standardize: bool) -> CliResult<(Vec<String>, LabeledData)> {
    let (features, data) = read_table(path, true)?.labeled(path)?;
    let data = if standardize {
        standardize_samples(&data, VarianceDenominator::default())?
    } else {
        data
    };
    Ok((features, data))
}

fn confusion_line(m: &[[usize; 2]; 2]) -> String {
    format!("1->1 {}, 1->2 {}, 2->1 {}, 2->2 {}", m[0][0], m[0][1], m[1][0], m[1][1])
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.6}"))
}

pub fn fit(args: &FitArgs, seed: u64) -> CliResult<()> {
    let (features, data) = load_labeled(&args.data, args.standardize_samples)?;
    let config = args.options.config();
    let (clf, cv) = fit_with_cv(args.method, &data, &config, RngStream::new(seed, 0))?;
    let plugin = estimate(&data).and_then(|est| estimate_error(&clf, &est)).ok();
    let cv_error = cv.as_ref().map(|c| c.chosen_error());
    let counts = confusion(&clf.predict(&data)?, data.y());
    let model = ModelFile {
        version: MODEL_VERSION,
        method: clf.method,
        features,
        w: clf.w.clone(),
        mu_a_hat: clf.mu_a_hat.clone(),
        lambda: clf.chosen_lambda,
        gamma: clf.gamma,
        seed,
        support: clf.support.clone(),
        standardize_samples: args.standardize_samples,
        cv_error,
        plugin_error: plugin,
        screened: clf.screening.as_ref().map(|s| s.selected.clone()),
        config: config_json("fit", seed, args),
    };
    model.write(&args.model)?;
    let mut out = String::new();
    let _ = writeln!(out, "method: {}", clf.method.label());
    let _ = writeln!(out, "lambda: {}", fmt_sig(clf.chosen_lambda, 6));
    let _ = writeln!(out, "gamma: {}", clf.gamma);
    let _ = writeln!(out, "support size: {}", clf.support.len());
    if let Some(s) = &clf.screening {
        let _ = writeln!(out, "screened features: {}", s.selected.len());
    }
    let _ = writeln!(out, "cv error: {}", opt(cv_error));
    let _ = writeln!(out, "plug-in error estimate: {}", opt(plugin));
    let _ = writeln!(out, "training confusion: {}", confusion_line(&counts));
    let _ = writeln!(out, "model: {}", args.model.display());
    emit(None, &out)
}

pub fn predict(args: &PredictArgs, seed: u64) -> CliResult<()> {
    let model = ModelFile::read(&args.model)?;
    let table = read_table(&args.data, false)?;
    if table.features != model.features {
        return Err(CliError::Usage(format!(
            "{}: feature columns do not match the {} columns of {}",
            args.data.display(),
            model.features.len(),
            args.model.display()
        )));
    }
    let x = if model.standardize_samples {
        standardize_rows(&table.x, VarianceDenominator::default())?
    } else {
        table.x
    };
    let clf = model.classifier()?;
    let mut out = header(&config_json("predict", seed, args));
    out.push_str(if table.labels.is_some() { "row,score,predicted,label\n" } else { "row,score,predicted\n" });
    let mut predicted = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let score = clf.score(&row)?;
        let class = clf.classify(&row)?;
        predicted.push(class);
        let _ = write!(out, "{},{score},{}", i + 1, class.label());
        if let Some(labels) = &table.labels {
            let _ = write!(out, ",{}", labels[i].label());
        }
        out.push('\n');
    }
    emit(args.output.as_deref(), &out)?;
    if let Some(labels) = &table.labels {
        eprintln!("confusion: {}", confusion_line(&confusion(&predicted, labels)));
    }
    Ok(())
}

pub fn path(args: &PathArgs, seed: u64) -> CliResult<()> {
    let (_, data) = load_labeled(&args.data, args.standardize_samples)?;
    let kind = match args.covariance {
        CovarianceChoice::Full => CovarianceKind::Full,
        CovarianceChoice::Diagonal => CovarianceKind::Diagonal,
    };
    let ccd = args.solver.ccd();
    let (problem, _) = build_problem(&data, kind, ccd.gamma)?;
    let path = solve_path(&problem, &ccd)?;
    let mut out = header(&config_json("path", seed, args));
    out.push_str("lambda,support,objective,converged,cycles,kkt_residual\n");
    for pt in &path.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(pt.lambda, 6),
            pt.support_size,
            fmt_sig(pt.objective, 8),
            pt.converged,
            pt.cycles_used,
            fmt_sig(pt.kkt_residual, 3)
        );
    }
    emit(args.output.as_deref(), &out)
}

/// `start:step:end` (inclusive) or a comma list.
pub fn parse_rho_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("invalid rho grid '{spec}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, end] => {
            let (a, s, b) = (num(start)?, num(step)?, num(end)?);
            if !(s > 0.0) || b < a {
                return Err(bad());
            }
            let n = ((b - a) / s + 1e-9).floor() as usize + 1;
            (0..n).map(|k| ((a + k as f64 * s) * 1e12).round() / 1e12).collect()
        }
        [list] => list.split(',').map(num).collect::<CliResult<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if let Some(rho) = grid.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(CliError::Usage(format!("rho {rho} is outside [0, 1)")));
    }
    Ok(grid)
}

pub fn theory(args: &TheoryArgs, seed: u64) -> CliResult<()> {
    let grid = parse_rho_grid(&args.rho_grid)?;
    let rows = figure1_table(&grid)?;
    let mut out = header(&config_json("theory", seed, args));
    out.push_str("rho,fisher,nb,sub10,sub20\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.rho,
            fmt_sig(100.0 * r.fisher, 4),
            fmt_sig(100.0 * r.naive_bayes, 4),
            fmt_sig(100.0 * r.sub10, 4),
            fmt_sig(100.0 * r.sub20, 4)
        );
    }
    emit(args.output.as_deref(), &out)
}

pub fn screen(args: &ScreenArgs, seed: u64) -> CliResult<()> {
    let (features, data) = load_labeled(&args.data, args.standardize_samples)?;
    let cfg = ScreeningConfig {
        q: args.q,
        variance: args.variance.into(),
        repetitions: args.repetitions,
    };
    let result = permutation_screen_with(&data, &cfg, RngStream::new(seed, 0).child(SCREEN_TAG))?;
    let mut selected = result.selected.clone();
    selected.sort_unstable();
    let expanded = if args.expand > 0 {
        expand_correlated(&data, &selected, args.expand, CorrelationKind::WithinClass)?
    } else {
        selected.clone()
    };
    let mut out = header(&config_json("screen", seed, args));
    let _ = writeln!(
        out,
        "# threshold: {}, fallback: {}",
        fmt_sig(result.threshold, 6),
        result.fallback
    );
    out.push_str("index,feature,t_abs,role\n");
    for (k, &j) in expanded.iter().enumerate() {
        let role = if k < selected.len() { "screened" } else { "expanded" };
        let _ = writeln!(out, "{},{},{},{role}", j + 1, features[j], fmt_sig(result.t_abs[j], 6));
    }
    emit(args.output.as_deref(), &out)
}

pub fn oracle(args: &OracleArgs, seed: u64) -> CliResult<()> {
    if args.c.is_empty() && !args.crosscheck {
        return Err(CliError::Usage("give at least one budget with --c, or --crosscheck".into()));
    }
    let (sigma, mu) = random_instance(args.p, RngStream::new(seed, 0));
    let mut out = header(&config_json("oracle", seed, args));
    if !args.c.is_empty() {
        out.push_str("c,objective,budget_active,support");
        for j in 1..=args.p {
            let _ = write!(out, ",w{j}");
        }
        out.push('\n');
        for &c in &args.c {
            let sol = exact_solve(&sigma, &mu, c)?;
            let _ = write!(out, "{c},{},{},{}", sol.objective, sol.active_l1, sol.support().len());
            for v in &sol.w {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    if args.crosscheck {
        let ccd = CcdConfig {
            gamma: args.gamma,
            tau: args.tau,
            grid_size: args.grid_size,
            ..CcdConfig::default()
        };
        let report = crosscheck_ccd(&sigma, &mu, &ccd)?;
        let _ = writeln!(out, "# crosscheck max_rel_gap: {:e}", report.max_rel_gap);
        out.push_str("lambda,c_prime,ccd_objective,exact_objective,rel_gap,support,converged\n");
        for r in &report.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{},{}",
                r.lambda, r.c_prime, r.ccd_objective, r.exact_objective, r.rel_gap, r.support_size, r.converged
            );
        }
    }
    emit(args.output.as_deref(), &out)
}

struct Scale {
    p: usize,
    n: usize,
    reps: usize,
}

fn rho_label(rho: f64) -> String {
    format!("{rho}")
}

pub fn simulate(args: &SimulateArgs, seed: u64) -> CliResult<()> {
    let scale = if args.full {
        Scale { p: FULL_P, n: FULL_N, reps: FULL_REPLICATIONS }
    } else {
        Scale { p: DESK_P, n: DESK_N, reps: DESK_REPLICATIONS }
    };
    let reps = args.reps.unwrap_or(scale.reps);
    if let Some(rho) = args.rho {
        if !(0.0..1.0).contains(&rho) {
            return Err(CliError::Usage(format!("rho {rho} is outside [0, 1)")));
        }
    }
    let config = args.options.config();
    let rng = RngStream::new(seed, 0);
    let run = |scenario: Scenario| run_experiment(&scenario, &args.methods, reps, &config, rng);
    let body = match args.scenario {
        ScenarioChoice::Equicorr | ScenarioChoice::Block => {
            let rho = args.rho.unwrap_or(0.5);
            let scenario = if args.scenario == ScenarioChoice::Equicorr {
                Scenario::equicorrelation(scale.p, scale.n, rho)
            } else {
                Scenario::block_diagonal(scale.p, scale.n, rho)
            };
            render_table("rho", &[(rho_label(rho), run(scenario)?)])
        }
        ScenarioChoice::Negblock => {
            let s = Scenario::negative_blocks(scale.p, scale.n);
            render_table("scenario", &[(s.name.clone(), run(s)?)])
        }
        ScenarioChoice::Random => {
            let s = Scenario::random_correlation(scale.p, scale.n);
            render_table("scenario", &[(s.name.clone(), run(s)?)])
        }
        ScenarioChoice::Table1 => {
            let rows = table_rho_grid()
                .into_iter()
                .map(|rho| Ok((rho_label(rho), run(Scenario::equicorrelation(scale.p, scale.n, rho))?)))
                .collect::<CliResult<Vec<_>>>()?;
            render_table("rho", &rows)
        }
        ScenarioChoice::GammaStudy => {
            let rhos = args.rho.map_or_else(|| vec![0.0, 0.5, 0.9], |r| vec![r]);
            let settings = rhos
                .into_iter()
                .map(|rho| {
                    let scenario = Scenario::equicorrelation(scale.p, scale.n, rho);
                    let rows = gamma_sensitivity(&scenario, &GAMMA_GRID, reps, &config, rng)?;
                    Ok((format!("rho={rho}"), rows))
                })
                .collect::<CliResult<Vec<_>>>()?;
            render_gamma_study(&settings)?
        }
    };
    let mut out = header(&config_json("simulate", seed, args));
    out.push_str(&body);
    emit(args.output.as_deref(), &out)
}

