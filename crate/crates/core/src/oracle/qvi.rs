//! Policy iteration for the stationary obstacle problem
//!
//! ```text
//! min( ψ(x) - v, min_u [ ½v'' + (μ - ρx - u)v' + γ1 u² + γ2 ] ) = 0
//! ```
//!
//! on `[x_lo, x_hi]`. The left end is pinned to the obstacle; the right end
//! uses `v'' = 0`. Drift differences are central where that keeps the matrix
//! monotone and upwind elsewhere.

use serde::Serialize;

use super::{interpolate, ControlGrid, Grid2D};
use crate::error::{Error, Result};
use crate::stopping::StoppingParams;

const TOL: f64 = 1e-10;
/// Iterations allowed beyond one per grid node; the stop set can shrink by
/// a single node per sweep where the local test is not decisive.
const EXTRA_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QviSolution {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub stop: Vec<bool>,
    /// First grid point in the continuation region.
    pub boundary_hat: Option<f64>,
    pub iterations: usize,
    pub dx: f64,
    /// `max(v - ψ)`; should not exceed rounding level.
    pub max_obstacle_excess: f64,
}

impl QviSolution {
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.v, x)
    }
}

/// Solves the stopping problem with obstacle `x²`.
pub fn dp_qvi_stopping(
    sp: &StoppingParams,
    grid: &Grid2D,
    controls: &ControlGrid,
) -> Result<QviSolution> {
    dp_qvi_with_obstacle(sp, grid, controls, |x| x * x)
}

fn best_control(controls: &ControlGrid, gamma1: f64, slope: f64) -> f64 {
    // minimizes γ1 u² - u v'
    match controls {
        ControlGrid::Interval { lo, hi } => (slope / (2.0 * gamma1)).clamp(*lo, *hi),
        ControlGrid::Finite(us) => {
            let cost = |u: f64| gamma1 * u * u - u * slope;
            us.iter()
                .cloned()
                .fold((f64::NAN, f64::INFINITY), |(bu, bc), u| {
                    let c = cost(u);
                    if c < bc {
                        (u, c)
                    } else {
                        (bu, bc)
                    }
                })
                .0
        }
    }
}

/// One row `l v[i-1] + d v[i] + r v[i+1] = f` of `-(½v'' + b v') = γ1u² + γ2`.
fn continue_row(b: f64, dx: f64, last: bool) -> (f64, f64, f64) {
    let h2 = dx * dx;
    if last {
        // v'' = 0 and a backward difference; the drift is negative here
        (b / dx, -b / dx, 0.0)
    } else if b.abs() * dx <= 1.0 {
        (
            -(0.5 / h2 - b / (2.0 * dx)),
            1.0 / h2,
            -(0.5 / h2 + b / (2.0 * dx)),
        )
    } else if b > 0.0 {
        (-0.5 / h2, 1.0 / h2 + b / dx, -0.5 / h2 - b / dx)
    } else {
        (-0.5 / h2 + b / dx, 1.0 / h2 - b / dx, -0.5 / h2)
    }
}

fn thomas(l: &[f64], d: &[f64], r: &[f64], f: &[f64], out: &mut [f64]) {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut fp = vec![0.0; n];
    cp[0] = r[0] / d[0];
    fp[0] = f[0] / d[0];
    for i in 1..n {
        let m = d[i] - l[i] * cp[i - 1];
        cp[i] = r[i] / m;
        fp[i] = (f[i] - l[i] * fp[i - 1]) / m;
    }
    out[n - 1] = fp[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = fp[i] - cp[i] * out[i + 1];
    }
}

/// Same as [`dp_qvi_stopping`] with an arbitrary obstacle `ψ`.
pub fn dp_qvi_with_obstacle<F: Fn(f64) -> f64>(
    sp: &StoppingParams,
    grid: &Grid2D,
    controls: &ControlGrid,
    obstacle: F,
) -> Result<QviSolution> {
    sp.validate()?;
    controls.validate()?;
    if !(sp.drift(grid.x_hi) < 0.0) {
        return Err(Error::Grid(format!(
            "x_hi = {} must exceed k = {} so the drift points inward",
            grid.x_hi, sp.k
        )));
    }
    let n = grid.n_x;
    let dx = grid.dx();
    let xs = grid.xs();
    let psi: Vec<f64> = xs.iter().map(|&x| obstacle(x)).collect();
    let mut v = psi.clone();
    let mut next = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut stop = vec![true; n];
    let (mut l, mut d, mut r, mut f) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let max_iterations = n + EXTRA_ITERATIONS;
    for iteration in 1..=max_iterations {
        // policy improvement
        for i in 1..n {
            let last = i == n - 1;
            let slope = if last {
                (v[i] - v[i - 1]) / dx
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * dx)
            };
            u[i] = best_control(controls, sp.gamma1, slope);
            let b = sp.drift(xs[i]) - u[i];
            let (li, di, ri) = continue_row(b, dx, last);
            let lv = -(li * v[i - 1] + di * v[i] + if last { 0.0 } else { ri * v[i + 1] });
            let hjb = lv + sp.gamma1 * u[i] * u[i] + sp.gamma2;
            // first pass continues everywhere so the stop set grows in one jump
            stop[i] = iteration > 1 && psi[i] - v[i] <= hjb;
            if stop[i] {
                (l[i], d[i], r[i], f[i]) = (0.0, 1.0, 0.0, psi[i]);
            } else {
                (l[i], d[i], r[i], f[i]) = (li, di, ri, sp.gamma1 * u[i] * u[i] + sp.gamma2);
            }
        }
        (l[0], d[0], r[0], f[0]) = (0.0, 1.0, 0.0, psi[0]);
        u[0] = 0.0;
        // policy evaluation
        thomas(&l, &d, &r, &f, &mut next);
        let change = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if change <= TOL * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            for i in 0..n {
                if stop[i] {
                    u[i] = 0.0;
                }
            }
            let boundary_hat = stop.iter().position(|s| !s).map(|i| xs[i]);
            let max_obstacle_excess = v
                .iter()
                .zip(&psi)
                .map(|(a, b)| a - b)
                .fold(f64::NEG_INFINITY, f64::max);
            return Ok(QviSolution {
                x: xs,
                v,
                u,
                stop,
                boundary_hat,
                iterations: iteration,
                dx,
                max_obstacle_excess,
            });
        }
        if iteration == max_iterations {
            return Err(Error::NoConvergence {
                iterations: iteration,
                change,
            });
        }
    }
    unreachable!()
}
