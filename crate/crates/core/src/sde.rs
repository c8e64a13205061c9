//! Euler–Maruyama simulation of controlled goodwill paths and Monte Carlo
//! evaluation of the discounted performance functional.
//!
//! Every path `i` draws its normals from [`PathStream::new(seed, i)`], and
//! per-path results are reduced in index order, so estimates are bit-for-bit
//! reproducible regardless of how rayon schedules the work.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::policy::Policy;
use crate::rng::PathStream;
use crate::stopping::{StoppingParams, StoppingSolution};

/// Expected overshoot of a discretely monitored Brownian motion past a
/// level, in units of `√dt` (`-ζ(1/2)/√(2π)`).
pub const OVERSHOOT_CONSTANT: f64 = 0.5826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl PathGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0 < t_end) || !t0.is_finite() || !t_end.is_finite() || n_steps == 0 {
            return Err(Error::Grid(format!(
                "need t0 < t_end and n_steps >= 1 (got [{t0}, {t_end}], {n_steps})"
            )));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Node `k`, computed from the integer index.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }
}

/// Sampled path: `u[k]` is the control applied on `[t[k], t[k+1])`; the last
/// entry is the policy evaluated at the final node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Control source with any per-node precomputation done once per run.
enum Prepared<'a> {
    Gains(Vec<f64>),
    General(&'a Policy),
}

impl<'a> Prepared<'a> {
    fn new(pol: &'a Policy, grid: &PathGrid) -> Result<Self> {
        match pol {
            Policy::LinearFeedback { gain, .. } => {
                let gains = (0..=grid.n_steps)
                    .map(|k| {
                        pol.evaluate(grid.node(k), 0.0)?;
                        gain(grid.node(k))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Prepared::Gains(gains))
            }
            _ => Ok(Prepared::General(pol)),
        }
    }

    fn control(&self, k: usize, t: f64, x: f64) -> Result<f64> {
        match self {
            Prepared::Gains(g) => Ok((g[k] * x).max(0.0)),
            Prepared::General(pol) => pol.checked(t, x),
        }
    }
}

struct PathOutcome {
    x_end: f64,
    /// `Σ e^{-c t_k} loss(u_k) dt`.
    running: f64,
    nonpositive: bool,
    trajectory: Option<Trajectory>,
}

fn run_path<L: Fn(f64) -> f64>(
    model: &Model,
    control: &Prepared,
    loss: &L,
    grid: &PathGrid,
    x_start: f64,
    stream: &mut PathStream,
    record: bool,
) -> Result<PathOutcome> {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let c = model.params().c;
    let mut x = x_start;
    let mut running = 0.0;
    let mut nonpositive = false;
    let mut traj = record.then(|| Trajectory {
        t: Vec::with_capacity(grid.n_steps + 1),
        x: Vec::with_capacity(grid.n_steps + 1),
        u: Vec::with_capacity(grid.n_steps + 1),
    });
    for k in 0..grid.n_steps {
        let t = grid.node(k);
        let u = control.control(k, t, x)?;
        if let Some(tr) = traj.as_mut() {
            tr.t.push(t);
            tr.x.push(x);
            tr.u.push(u);
        }
        running += (-c * t).exp() * loss(u) * dt;
        let z = stream.normal();
        x += model.drift(x, u) * dt + model.diffusion(x, u) * sqrt_dt * z;
        if x <= 0.0 {
            nonpositive = true;
        }
    }
    if let Some(tr) = traj.as_mut() {
        tr.t.push(grid.t_end);
        tr.x.push(x);
        tr.u.push(control.control(grid.n_steps, grid.t_end, x)?);
    }
    Ok(PathOutcome {
        x_end: x,
        running,
        nonpositive,
        trajectory: traj,
    })
}

/// One Euler–Maruyama path using stream `(seed, 0)`.
pub fn simulate_path(
    model: &Model,
    pol: &Policy,
    grid: &PathGrid,
    x_start: f64,
    seed: u64,
) -> Result<Trajectory> {
    let control = Prepared::General(pol);
    let mut stream = PathStream::new(seed, 0);
    let out = run_path(model, &control, &|_| 0.0, grid, x_start, &mut stream, true)?;
    Ok(out.trajectory.expect("recorded"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub keep_samples: bool,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            keep_samples: false,
        }
    }

    pub fn keep_samples(mut self) -> Self {
        self.keep_samples = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Documented discretization bias bound, when one applies.
    pub bias_bound: Option<f64>,
    /// Paths that reached the end of the grid without stopping.
    pub truncated: usize,
    /// Paths that left `(0, ∞)` although the continuous dynamics cannot.
    pub positivity_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl EvalReport {
    fn from_samples(samples: Vec<f64>, cfg: &McConfig) -> Self {
        let (mean, std_error) = mean_and_se(&samples);
        Self {
            mean,
            std_error,
            n_paths: samples.len(),
            seed: cfg.seed,
            bias_bound: None,
            truncated: 0,
            positivity_violations: 0,
            samples: cfg.keep_samples.then_some(samples),
        }
    }

    /// Mean and standard error of the per-path difference `self - other`;
    /// both runs must have kept their samples and share the seed.
    pub fn paired_difference(&self, other: &EvalReport) -> Result<(f64, f64)> {
        match (&self.samples, &other.samples) {
            (Some(a), Some(b)) if a.len() == b.len() && self.seed == other.seed => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                Ok(mean_and_se(&d))
            }
            _ => Err(Error::Precondition(
                "paired difference needs retained samples from equal-size runs with the same seed"
                    .into(),
            )),
        }
    }
}

/// Sequential mean and standard error (sample sd / √n).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of
/// `E[e^{-cT} reward(x_T) - ∫_s^T e^{-ct} loss(u_t) dt]` from `x` at
/// `s = grid.t0`, with `T = grid.t_end`.
pub fn evaluate_policy<R, L>(
    model: &Model,
    pol: &Policy,
    reward: R,
    loss: L,
    x: f64,
    grid: &PathGrid,
    cfg: &McConfig,
) -> Result<EvalReport>
where
    R: Fn(f64) -> f64 + Sync,
    L: Fn(f64) -> f64 + Sync,
{
    if cfg.n_paths == 0 {
        return Err(Error::NoPaths);
    }
    let control = Prepared::new(pol, grid)?;
    let terminal_weight = (-model.params().c * grid.t_end).exp();
    let outcomes: Vec<(f64, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = PathStream::new(cfg.seed, i as u64);
            let out = run_path(model, &control, &loss, grid, x, &mut stream, false)?;
            Ok((
                terminal_weight * reward(out.x_end) - out.running,
                out.nonpositive,
            ))
        })
        .collect::<Result<_>>()?;
    let watch_positivity =
        model.params().sigma0 == 0.0 && x > 0.0 && matches!(pol, Policy::LinearFeedback { .. });
    let violations = if watch_positivity {
        outcomes.iter().filter(|o| o.1).count()
    } else {
        0
    };
    let samples = outcomes.into_iter().map(|o| o.0).collect();
    let mut report = EvalReport::from_samples(samples, cfg);
    report.positivity_violations = violations;
    Ok(report)
}

/// Outcome of one stopped path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedPathResult {
    pub tau: f64,
    pub y_path: Vec<f64>,
    /// `y(τ)² + Σ (γ1 u² + γ2) dt` up to the stopping node.
    pub cost: f64,
    pub truncated: bool,
}

fn run_stopped<F: Fn(f64) -> f64>(
    sp: &StoppingParams,
    control: &F,
    boundary: f64,
    grid: &PathGrid,
    y_start: f64,
    stream: &mut PathStream,
    record: bool,
) -> StoppedPathResult {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut y = y_start;
    let mut running = 0.0;
    let mut path = Vec::new();
    for k in 0..=grid.n_steps {
        if record {
            path.push(y);
        }
        if y <= boundary {
            return StoppedPathResult {
                tau: grid.node(k) - grid.t0,
                y_path: path,
                cost: y * y + running,
                truncated: false,
            };
        }
        if k == grid.n_steps {
            break;
        }
        let u = control(y);
        running += (sp.gamma1 * u * u + sp.gamma2) * dt;
        y += (sp.drift(y) - u) * dt + sqrt_dt * stream.normal();
    }
    StoppedPathResult {
        tau: grid.t_end - grid.t0,
        y_path: path,
        cost: y * y + running,
        truncated: true,
    }
}

/// Simulates `dy = (μ - ρy - u*) dt + dw` until the first grid node with
/// `y <= x0`, using stream `(seed, 0)`.
pub fn simulate_stopped(
    sol: &StoppingSolution,
    grid: &PathGrid,
    y_start: f64,
    seed: u64,
) -> StoppedPathResult {
    let mut stream = PathStream::new(seed, 0);
    run_stopped(
        &sol.params,
        &|y| sol.control(y),
        sol.x0,
        grid,
        y_start,
        &mut stream,
        true,
    )
}

/// Mean stopped cost of a (possibly suboptimal) feedback and stopping
/// threshold. The report's `bias_bound` covers the late detection of the
/// crossing at grid nodes: `2 · 2|boundary| · 0.5826 · √dt`.
pub fn evaluate_stopped<F>(
    sp: &StoppingParams,
    control: F,
    boundary: f64,
    grid: &PathGrid,
    y_start: f64,
    cfg: &McConfig,
) -> Result<EvalReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if cfg.n_paths == 0 {
        return Err(Error::NoPaths);
    }
    let results: Vec<(f64, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = PathStream::new(cfg.seed, i as u64);
            let r = run_stopped(sp, &control, boundary, grid, y_start, &mut stream, false);
            (r.cost, r.truncated)
        })
        .collect();
    let truncated = results.iter().filter(|r| r.1).count();
    let mut report = EvalReport::from_samples(results.into_iter().map(|r| r.0).collect(), cfg);
    report.truncated = truncated;
    report.bias_bound = Some(2.0 * 2.0 * boundary.abs() * OVERSHOOT_CONSTANT * grid.dt().sqrt());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::solve_linear;
    use crate::model::{ControlSet, ModelParams};

    fn model(rho: f64, s0: f64, s1: f64, s2: f64) -> Model {
        Model::new(
            ModelParams {
                rho,
                ..ModelParams::default()
            }
            .with_sigmas(s0, s1, s2),
        )
        .unwrap()
    }

    fn constant(u: f64) -> Policy {
        Policy::Constant {
            u,
            set: ControlSet::bounded(1.0),
        }
    }

    #[test]
    fn grid_nodes_exact() {
        let g = PathGrid::new(0.0, 1.0, 10).unwrap();
        assert_eq!(g.node(3), 3.0 * 0.1);
        assert_eq!(g.node(10), 1.0);
        assert!(PathGrid::new(1.0, 1.0, 10).is_err());
        assert!(PathGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn deterministic_decay() {
        let g = PathGrid::new(0.0, 1.0, 10_000).unwrap();
        let tr = simulate_path(&model(1.0, 0.0, 0.0, 0.0), &constant(0.0), &g, 1.0, 1).unwrap();
        assert!((tr.x.last().unwrap() - (-1f64).exp()).abs() < 1e-3);
        assert_eq!(tr.t.len(), 10_001);
    }

    #[test]
    fn mean_ode_with_full_control() {
        let g = PathGrid::new(0.0, 1.0, 10_000).unwrap();
        let tr = simulate_path(&model(0.5, 0.0, 0.0, 0.0), &constant(1.0), &g, 1.0, 1).unwrap();
        let want = (-0.5f64).exp() + 2.0 * (1.0 - (-0.5f64).exp());
        assert!((tr.x.last().unwrap() - want).abs() < 1e-3);
    }

    #[test]
    fn first_order_weak_convergence() {
        let m = model(0.5, 0.0, 0.0, 0.0);
        let want = (-0.5f64).exp() + 2.0 * (1.0 - (-0.5f64).exp());
        let err = |n| {
            let g = PathGrid::new(0.0, 1.0, n).unwrap();
            let tr = simulate_path(&m, &constant(1.0), &g, 1.0, 0).unwrap();
            (tr.x.last().unwrap() - want).abs()
        };
        for n in [50, 100, 200, 400] {
            assert!(err(2 * n) <= 0.5 * err(n) * 1.02, "n = {n}");
        }
    }

    #[test]
    fn martingale_mean() {
        let m = model(0.5, 0.0, 1.0, 0.0);
        let g = PathGrid::new(0.0, 1.0, 200).unwrap();
        let rep = evaluate_policy(
            &m,
            &constant(0.0),
            |x| x,
            |_| 0.0,
            1.0,
            &g,
            &McConfig::new(100_000, 5),
        )
        .unwrap();
        // c = 0.1 discounts the reward; undo it for the mean of x_T
        let mean = rep.mean * 0.1f64.exp();
        let se = rep.std_error * 0.1f64.exp();
        assert!((mean - (-0.5f64).exp()).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn quadrature_free_case() {
        let m = Model::new(ModelParams {
            gamma0: 1.3,
            ..ModelParams::default()
        })
        .unwrap();
        let g = PathGrid::new(0.0, 1.0, 64).unwrap();
        let rep = evaluate_policy(
            &m,
            &constant(0.0),
            |x| 1.3 * x,
            |u| u,
            2.0,
            &g,
            &McConfig::new(10, 1),
        )
        .unwrap();
        let exact = m.gamma() * 2.0 * (1.0 - 0.5 / 64.0f64).powi(64);
        assert!((rep.mean - exact).abs() < 1e-14);
        assert_eq!(rep.std_error, 0.0);
    }

    #[test]
    fn bang_bang_matches_closed_form() {
        let m = Model::new(
            ModelParams {
                gamma0: 1.2,
                ..ModelParams::default()
            }
            .with_sigmas(0.3, 0.4, 0.2),
        )
        .unwrap();
        let sol = solve_linear(&m).unwrap();
        let g = PathGrid::new(0.0, 1.0, 1000).unwrap();
        let rep = evaluate_policy(
            &m,
            &sol.policy(),
            |x| 1.2 * x,
            |u| u,
            1.0,
            &g,
            &McConfig::new(20_000, 3),
        )
        .unwrap();
        // O(dt) left-endpoint bias of the switched control is ~1e-3
        assert!((rep.mean - sol.value(0.0, 1.0)).abs() < 3.0 * rep.std_error + 2e-3);
    }

    #[test]
    fn reproducible_and_order_independent() {
        let m = model(0.5, 0.1, 0.3, 0.2);
        let g = PathGrid::new(0.0, 1.0, 50).unwrap();
        let cfg = McConfig::new(500, 42).keep_samples();
        let a = evaluate_policy(&m, &constant(0.5), |x| x * x, |u| u * u, 1.0, &g, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool
            .install(|| evaluate_policy(&m, &constant(0.5), |x| x * x, |u| u * u, 1.0, &g, &cfg))
            .unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.samples, b.samples);
        // path 7 of a bigger run is path 7 of a smaller one
        let small = evaluate_policy(
            &m,
            &constant(0.5),
            |x| x * x,
            |u| u * u,
            1.0,
            &g,
            &McConfig::new(10, 42).keep_samples(),
        )
        .unwrap();
        assert_eq!(small.samples.unwrap()[7], a.samples.as_ref().unwrap()[7]);
        let (d, se) = a.paired_difference(&b).unwrap();
        assert_eq!((d, se), (0.0, 0.0));
    }

    #[test]
    fn out_of_set_control_faults() {
        let bad = Policy::Constant {
            u: 2.0,
            set: ControlSet::bounded(1.0),
        };
        let g = PathGrid::new(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            simulate_path(&model(0.5, 0.0, 0.0, 0.0), &bad, &g, 1.0, 0),
            Err(Error::ControlOutOfSet { .. })
        ));
        assert!(matches!(
            evaluate_policy(
                &model(0.5, 0.0, 0.0, 0.0),
                &constant(0.0),
                |x| x,
                |u| u,
                1.0,
                &g,
                &McConfig::new(0, 0)
            ),
            Err(Error::NoPaths)
        ));
    }

    #[test]
    fn stopped_path_edge_cases() {
        let sol =
            StoppingSolution::solve(&StoppingParams::balanced(1.0, 0.5, 2.0).unwrap()).unwrap();
        let g = PathGrid::new(0.0, 10.0, 1000).unwrap();
        let r = simulate_stopped(&sol, &g, sol.x0, 3);
        assert_eq!(r.tau, 0.0);
        assert_eq!(r.cost, sol.x0 * sol.x0);
        for seed in 0..20 {
            let r = simulate_stopped(&sol, &g, sol.x0 + 1e-3, seed);
            assert!(r.tau > 0.0 && r.cost >= 0.0);
            assert!(*r.y_path.last().unwrap() <= sol.x0 || r.truncated);
        }
    }
}
