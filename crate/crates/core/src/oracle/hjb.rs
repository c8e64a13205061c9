//! Explicit upwind finite differences for the Bellman equation
//!
//! ```text
//! V_t + max_u [ (u - ρx) V_x + ½ σ(x, u)² V_xx - e^{-ct} u² ] = 0,
//! V(T, x) = terminal(x).
//! ```
//!
//! Each of the `n_t` base steps is split into as many sub-steps as the
//! explicit monotonicity bound requires for the controls actually chosen.

use serde::Serialize;

use super::{interpolate, BoundaryMode, ControlGrid, Grid2D};
use crate::error::{Error, Result};
use crate::model::Model;

/// Safety factor applied to the largest stable sub-step.
const CFL_SAFETY: f64 = 0.9;
pub const DEFAULT_MAX_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbSurface {
    pub x: Vec<f64>,
    /// Value at `t = 0`.
    pub v0: Vec<f64>,
    /// Largest `dt (|b|/dx + σ²/dx²)` seen with the base step.
    pub cfl_ratio: f64,
    /// Most sub-steps used within one base step.
    pub max_substeps: usize,
    /// Node updates whose maximizing control sat at the top of the control set.
    pub cap_hits: usize,
    /// Cap hits away from the two boundary nodes.
    pub interior_cap_hits: usize,
}

impl HjbSurface {
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.v0, x)
    }
}

struct Local {
    d_minus: f64,
    d_plus: f64,
    dxx: f64,
}

impl Local {
    fn hamiltonian(&self, model: &Model, x: f64, u: f64, w: f64) -> (f64, f64) {
        let b = model.drift(x, u);
        let s = model.diffusion(x, u);
        let dx1 = if b >= 0.0 { self.d_plus } else { self.d_minus };
        (b * dx1 + 0.5 * s * s * self.dxx - w * u * u, b)
    }
}

fn best_control(model: &Model, controls: &ControlGrid, loc: &Local, x: f64, w: f64) -> (f64, f64) {
    let eval = |u: f64| loc.hamiltonian(model, x, u, w).0;
    let mut best_u = f64::NAN;
    let mut best_h = f64::NEG_INFINITY;
    let mut consider = |u: f64| {
        let h = eval(u);
        if h > best_h {
            best_h = h;
            best_u = u;
        }
    };
    match controls {
        ControlGrid::Finite(us) => us.iter().for_each(|&u| consider(u)),
        ControlGrid::Interval { lo, hi } => {
            let p = model.params();
            // Drift changes sign at u = ρx; on each side H is quadratic in u.
            let kink = (p.rho * x).clamp(*lo, *hi);
            let base = p.sigma0 + p.sigma1 * x.abs();
            let quad = 0.5 * p.sigma2 * p.sigma2 * loc.dxx - w;
            for (a, b, d1) in [(*lo, kink, loc.d_minus), (kink, *hi, loc.d_plus)] {
                consider(a);
                consider(b);
                if quad < 0.0 {
                    let lin = d1 + p.sigma2 * base * loc.dxx;
                    let vertex = -lin / (2.0 * quad);
                    if vertex > a && vertex < b {
                        consider(vertex);
                    }
                }
            }
        }
    }
    (best_u, best_h)
}

/// Value at `t = 0` of the Bellman equation with the given terminal reward.
pub fn fd_hjb<F: Fn(f64) -> f64>(
    model: &Model,
    grid: &Grid2D,
    controls: &ControlGrid,
    terminal: F,
    max_substeps: usize,
) -> Result<HjbSurface> {
    controls.validate()?;
    let n = grid.n_x;
    let dx = grid.dx();
    let xs = grid.xs();
    let horizon = model.horizon();
    let dt = horizon / grid.n_t as f64;
    let cap = controls.upper();
    let mut v: Vec<f64> = xs.iter().map(|&x| terminal(x)).collect();
    let mut next = v.clone();
    let mut us = vec![0.0; n];
    let mut ham = vec![0.0; n];
    let mut cfl_ratio: f64 = 0.0;
    let mut max_sub = 0;
    let mut cap_hits = 0;
    let mut interior_cap_hits = 0;

    for step in (0..grid.n_t).rev() {
        let t_top = (step + 1) as f64 * dt;
        let mut remaining = dt;
        let mut t = t_top;
        let mut substeps = 0;
        while remaining > 0.0 {
            let w = (-model.params().c * t).exp();
            let mut lambda: f64 = 0.0;
            for i in 0..n {
                let loc = local(&v, i, dx, grid.boundary);
                let (u, h) = best_control(model, controls, &loc, xs[i], w);
                let b = model.drift(xs[i], u);
                let s = model.diffusion(xs[i], u);
                let rate = b.abs() / dx + s * s / (dx * dx);
                us[i] = u;
                ham[i] = h;
                lambda = lambda.max(rate);
            }
            if substeps == 0 {
                cfl_ratio = cfl_ratio.max(lambda * dt);
            }
            let h = if lambda > 0.0 {
                remaining.min(CFL_SAFETY / lambda)
            } else {
                remaining
            };
            // absorb a sliver left by rounding into this sub-step
            let h = if remaining - h <= 1e-12 * dt {
                remaining
            } else {
                h
            };
            substeps += 1;
            if substeps > max_substeps {
                return Err(Error::Instability {
                    ratio: lambda * dt,
                    substeps: (lambda * dt / CFL_SAFETY).ceil() as usize,
                    limit: max_substeps,
                });
            }
            for i in 0..n {
                next[i] = v[i] + h * ham[i];
                if us[i] >= cap {
                    cap_hits += 1;
                    if i > 0 && i < n - 1 {
                        interior_cap_hits += 1;
                    }
                }
            }
            std::mem::swap(&mut v, &mut next);
            remaining -= h;
            t -= h;
        }
        max_sub = max_sub.max(substeps);
    }
    Ok(HjbSurface {
        x: xs,
        v0: v,
        cfl_ratio,
        max_substeps: max_sub,
        cap_hits,
        interior_cap_hits,
    })
}

fn local(v: &[f64], i: usize, dx: f64, mode: BoundaryMode) -> Local {
    let n = v.len();
    let second = |k: usize| (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (dx * dx);
    if i == 0 {
        match mode {
            BoundaryMode::Reflecting => Local {
                d_minus: 0.0,
                d_plus: 0.0,
                dxx: 2.0 * (v[1] - v[0]) / (dx * dx),
            },
            BoundaryMode::Extrapolating => {
                let d = (v[1] - v[0]) / dx;
                Local {
                    d_minus: d,
                    d_plus: d,
                    dxx: second(1),
                }
            }
        }
    } else if i == n - 1 {
        match mode {
            BoundaryMode::Reflecting => Local {
                d_minus: 0.0,
                d_plus: 0.0,
                dxx: 2.0 * (v[n - 2] - v[n - 1]) / (dx * dx),
            },
            BoundaryMode::Extrapolating => {
                let d = (v[n - 1] - v[n - 2]) / dx;
                Local {
                    d_minus: d,
                    d_plus: d,
                    dxx: second(n - 2),
                }
            }
        }
    } else {
        Local {
            d_minus: (v[i] - v[i - 1]) / dx,
            d_plus: (v[i + 1] - v[i]) / dx,
            dxx: second(i),
        }
    }
}

/// The linear-quadratic problem: terminal reward `γ x²`, control cost `u²`.
/// The value should approach `-P(0) x²`.
pub fn fd_hjb_lq(model: &Model, grid: &Grid2D, controls: &ControlGrid) -> Result<HjbSurface> {
    let gamma = model.gamma();
    fd_hjb(
        model,
        grid,
        controls,
        |x| gamma * x * x,
        DEFAULT_MAX_SUBSTEPS,
    )
}
