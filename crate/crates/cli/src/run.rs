//! Dispatch from a [`RunConfig`] to the solvers.

use std::path::PathBuf;
use std::sync::Arc;

use adk_core::error::Error as CoreError;
use adk_core::linear::{solve_budget, solve_linear};
use adk_core::lq::{lq_feedback, riccati_integrate, CaseLabel};
use adk_core::model::{Model, ModelParams};
use adk_core::policy::Policy;
use adk_core::sde::{evaluate_policy, simulate_path, McConfig, PathGrid};
use adk_core::stopping::{solve_stopping, StoppingParams};
use adk_core::verify::{run_suite, Scale};
use log::info;
use serde::Serialize;

use crate::config::{Problem, RunConfig, SimPolicy, VerifyBlock};
use crate::emit::{emit, Artifacts, Table};
use crate::error::CliError;

/// Result of a run before anything is written. `deferred` is an error to
/// report after the artifacts have been emitted.
#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: Vec<String>,
    pub deferred: Option<CliError>,
}

impl Outcome {
    fn new(artifacts: Artifacts, summary: Vec<String>) -> Self {
        Self {
            artifacts,
            summary,
            deferred: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LinearRecord {
    /// Unclamped closed-form switching time.
    pub t_star: f64,
    /// Switching time actually used, clamped into `[0, T]`.
    pub t_switch: f64,
    pub value_at_x_init: f64,
}

#[derive(Debug, Serialize)]
pub struct BudgetRecord {
    pub t_star: f64,
    pub lambda_star: f64,
    /// `E[x_T]` from `x_init`.
    pub value_at_x_init: f64,
}

#[derive(Debug, Serialize)]
pub struct LqRecord {
    pub well_posed: bool,
    pub case_label: CaseLabel,
    pub t_blow: Option<f64>,
    #[serde(rename = "P0")]
    pub p0: Option<f64>,
    pub value_at_x_init: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct StopRecord {
    pub x0: f64,
    pub alpha2: f64,
    pub u_at_boundary: f64,
}

fn model_of(cfg: &RunConfig) -> Result<Model, CliError> {
    let params: ModelParams = cfg
        .model
        .ok_or_else(|| CliError::Config("missing [model] block".into()))?;
    Ok(Model::new(params)?)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn policy_table(pol: &Policy, times: &[f64], x: f64) -> Result<Table, CliError> {
    let mut table = Table::new("policy", &["t", "u"]);
    for &t in times {
        table.push(vec![t, pol.evaluate(t, x)?]);
    }
    Ok(table)
}

fn linear(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg)?;
    let p = model.params();
    let n_points = cfg.linear.as_ref().map_or(201, |b| b.n_points);
    let sol = solve_linear(&model)?;
    let record = LinearRecord {
        t_star: sol.t_star,
        t_switch: sol.t_split(),
        value_at_x_init: sol.value(0.0, p.x_init),
    };
    let times = linspace(0.0, p.horizon, n_points);
    let mut value = Table::new("value", &["t", "value"]);
    for &t in &times {
        value.push(vec![t, sol.value(t, p.x_init)]);
    }
    let mut artifacts = Artifacts::with_json("linear", &record);
    artifacts.tables = vec![policy_table(&sol.policy(), &times, p.x_init)?, value];
    let summary = vec![
        format!("t_star = {}", record.t_star),
        format!("value at x_init = {}", record.value_at_x_init),
    ];
    Ok(Outcome::new(artifacts, summary))
}

fn budget(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg)?;
    let p = model.params();
    let block = cfg.budget.as_ref().expect("checked at load");
    let sol = solve_budget(&model, block.budget)?;
    let record = BudgetRecord {
        t_star: sol.t_star,
        lambda_star: sol.lambda_star,
        value_at_x_init: sol.expected_terminal(p.x_init),
    };
    let times = linspace(0.0, p.horizon, block.n_points);
    let mut artifacts = Artifacts::with_json("budget", &record);
    artifacts.tables = vec![policy_table(&sol.policy, &times, p.x_init)?];
    let summary = vec![
        format!("t_star = {}", record.t_star),
        format!("lambda_star = {}", record.lambda_star),
    ];
    Ok(Outcome::new(artifacts, summary))
}

fn lq(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg)?;
    let p = *model.params();
    if p.sigma0 != 0.0 {
        return Err(CliError::Validation(CoreError::Precondition(format!(
            "the linear-quadratic problem needs sigma0 = 0 (got {})",
            p.sigma0
        ))));
    }
    let tol = cfg.lq.as_ref().map_or(1e-10, |b| b.tol);
    let sol = riccati_integrate(&model, 0.0, tol)?;
    let p0 = sol.well_posed.then(|| sol.p0());
    let record = LqRecord {
        well_posed: sol.well_posed,
        case_label: sol.case_label,
        t_blow: sol.t_blow,
        p0,
        value_at_x_init: p0.map(|p0| -p0 * p.x_init * p.x_init),
    };
    let mut table = Table::new("riccati", &["t", "P", "gain", "a", "c_coef"]);
    let mut nodes: Vec<(f64, f64)> = sol.t.iter().cloned().zip(sol.p.iter().cloned()).collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, pt) in nodes {
        let k = sol.gain_from(t, pt);
        table.push(vec![t, pt, k, -p.rho + k, p.sigma1 + p.sigma2 * k]);
    }
    let mut artifacts = Artifacts::with_json("lq", &record);
    artifacts.tables = vec![table];
    let mut summary = vec![format!(
        "case {}, well posed: {}",
        sol.case_label.as_str(),
        sol.well_posed
    )];
    if let Some(p0) = p0 {
        summary.push(format!("P(0) = {p0}"));
    }
    let mut outcome = Outcome::new(artifacts, summary);
    if !sol.well_posed {
        outcome.deferred = Some(CliError::Solver(CoreError::NotWellPosed {
            t_blow: sol.t_blow.unwrap_or(f64::NAN),
        }));
    }
    Ok(outcome)
}

fn stop(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg)?;
    let block = cfg.stop.as_ref().expect("checked at load");
    let sp = StoppingParams::new(block.k, model.params().rho, block.gamma1, block.gamma2)?;
    let sol = solve_stopping(&sp)?;
    let record = StopRecord {
        x0: sol.x0,
        alpha2: sol.alpha2,
        u_at_boundary: sol.u_at_boundary(),
    };
    let mut table = Table::new(
        "stopping",
        &["x", "value", "obstacle", "u_star", "qvi_residual"],
    );
    for x in sol.verification_grid(block.n_points) {
        let v = sol.value(x);
        let residual = (x * x - v).min(sol.hjb_residual(x));
        table.push(vec![x, v, x * x, sol.control(x), residual]);
    }
    let mut artifacts = Artifacts::with_json("stop", &record);
    artifacts.tables = vec![table];
    let summary = vec![
        format!("x0 = {}", record.x0),
        format!("alpha2 = {}", record.alpha2),
    ];
    Ok(Outcome::new(artifacts, summary))
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = model_of(cfg)?;
    let p = *model.params();
    let block = cfg.simulate.as_ref().expect("checked at load");
    let grid = PathGrid::new(0.0, p.horizon, block.n_steps)?;
    let mc = McConfig::new(block.n_paths, block.seed);
    let g0 = p.gamma0;
    let undo = (p.c * p.horizon).exp();
    let (pol, report) = match block.policy {
        SimPolicy::Linear => {
            let pol = solve_linear(&model)?.policy();
            let r = evaluate_policy(&model, &pol, |x| g0 * x, |u| u, p.x_init, &grid, &mc)?;
            (pol, r)
        }
        SimPolicy::Budget => {
            let pol = solve_budget(&model, block.budget.expect("checked at load"))?.policy;
            let r = evaluate_policy(&model, &pol, |x| undo * x, |_| 0.0, p.x_init, &grid, &mc)?;
            (pol, r)
        }
        SimPolicy::Lq => {
            let sol = Arc::new(riccati_integrate(&model, 0.0, 1e-10)?);
            let pol = lq_feedback(&sol)?;
            let r = evaluate_policy(
                &model,
                &pol,
                |x| g0 * x * x,
                |u| u * u,
                p.x_init,
                &grid,
                &mc,
            )?;
            (pol, r)
        }
    };
    let path = simulate_path(&model, &pol, &grid, p.x_init, block.seed)?;
    let mut table = Table::new("trajectory", &["t", "x", "u"]);
    for k in 0..path.t.len() {
        table.push(vec![path.t[k], path.x[k], path.u[k]]);
    }
    let mut artifacts = Artifacts::with_json("simulate", &report);
    artifacts.tables = vec![table];
    let summary = vec![format!(
        "mean = {} ± {} ({} paths)",
        report.mean, report.std_error, report.n_paths
    )];
    Ok(Outcome::new(artifacts, summary))
}

fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let block = cfg.verify.clone().unwrap_or(VerifyBlock {
        seed: 20240917,
        scale: Scale::Full,
    });
    let report = run_suite(block.seed, block.scale);
    let mut summary = Vec::new();
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        info!("{} took {:.2}s", c.name, c.seconds);
        summary.push(format!("{verdict} {}: {}", c.name, c.summary));
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    let mut outcome = Outcome::new(Artifacts::with_json("verify", &report), summary);
    if !failed.is_empty() {
        outcome.deferred = Some(CliError::Mismatch(failed.join(", ")));
    }
    Ok(outcome)
}

/// Runs the solver selected by the config without touching the disk.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    info!("running problem {}", cfg.problem);
    match cfg.problem {
        Problem::Linear => linear(cfg),
        Problem::Budget => budget(cfg),
        Problem::Lq => lq(cfg),
        Problem::Stop => stop(cfg),
        Problem::Simulate => simulate(cfg),
        Problem::Verify => verify(cfg),
    }
}

/// Runs, writes the artifacts, and prints the summary unless `quiet`.
pub fn run(cfg: &RunConfig, quiet: bool) -> Result<Vec<PathBuf>, CliError> {
    let outcome = execute(cfg)?;
    let written = emit(&outcome.artifacts, &cfg.formats, &cfg.output_dir)?;
    if !quiet {
        for line in &outcome.summary {
            println!("{line}");
        }
        for path in &written {
            println!("wrote {}", path.display());
        }
    }
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(written),
    }
}
