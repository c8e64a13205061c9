//! Brute-force solvers used to check the closed forms. All are
//! deterministic.

mod hjb;
mod qvi;

pub use hjb::{fd_hjb, fd_hjb_lq, HjbSurface};
pub use qvi::{dp_qvi_stopping, dp_qvi_with_obstacle, QviSolution};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{discount_integral, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryMode {
    /// Zero-slope (mirror) ghost values.
    Reflecting,
    /// One-sided first differences and the neighbour's second difference.
    Extrapolating,
}

/// Space-time grid for the finite-difference oracles. The time axis always
/// spans `[0, T]`; the stationary stopping problem ignores `n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub boundary: BoundaryMode,
}

impl Grid2D {
    pub fn new(
        x_lo: f64,
        x_hi: f64,
        n_x: usize,
        n_t: usize,
        boundary: BoundaryMode,
    ) -> Result<Self> {
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(Error::Grid(format!(
                "need x_lo < x_hi (got {x_lo}, {x_hi})"
            )));
        }
        if n_x < 16 || n_t < 16 {
            return Err(Error::Grid(format!(
                "need n_x, n_t >= 16 (got {n_x}, {n_t})"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            n_x,
            n_t,
            boundary,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.n_x - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_x - 1 {
            self.x_hi
        } else {
            self.x_lo + i as f64 * self.dx()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }
}

/// Discretized control set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControlGrid {
    Finite(Vec<f64>),
    /// Continuous interval, optimized exactly on each quadratic piece.
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl ControlGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ControlGrid::Finite(us) => {
                !us.is_empty() && us.iter().all(|u| u.is_finite() && *u >= 0.0)
            }
            ControlGrid::Interval { lo, hi } => *lo >= 0.0 && lo <= hi && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Grid(format!("invalid control grid {self:?}")))
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            ControlGrid::Finite(us) => us.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ControlGrid::Interval { hi, .. } => *hi,
        }
    }
}

/// Linear interpolation on an increasing grid, clamped at the ends.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&g| g <= x);
    if j == 0 {
        ys[0]
    } else if j == xs.len() {
        ys[xs.len() - 1]
    } else {
        let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
        ys[j - 1] * (1.0 - w) + ys[j] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearOracle {
    pub t_star_hat: f64,
    pub value_hat: f64,
    /// Objective at each candidate switch time `k T / n`.
    pub objective: Vec<f64>,
    /// Whether the objective rises then falls (informational only).
    pub unimodal: bool,
}

/// Grid search over switch times `s = kT/n` of the mean-dynamics objective
/// `γ E[x_T] - m ∫_s^T e^{-ct} dt` from `x_init`, with bang-bang control
/// switching at `s`. Ties keep the later switch time.
pub fn dp_linear(model: &Model, n: usize) -> Result<LinearOracle> {
    if n < 100 {
        return Err(Error::Grid(format!("need n >= 100 (got {n})")));
    }
    let p = model.params();
    let horizon = p.horizon;
    let objective: Vec<f64> = (0..=n)
        .map(|k| {
            let s = horizon * k as f64 / n as f64;
            let mean = p.x_init * (-p.rho * horizon).exp()
                + p.m / p.rho * -(-p.rho * (horizon - s)).exp_m1();
            model.gamma() * mean - p.m * discount_integral(p.c, s, horizon)
        })
        .collect();
    let mut best = 0;
    for (k, &j) in objective.iter().enumerate() {
        if j >= objective[best] {
            best = k;
        }
    }
    let peak = best;
    let unimodal = objective[..=peak].windows(2).all(|w| w[1] >= w[0])
        && objective[peak..].windows(2).all(|w| w[1] <= w[0]);
    Ok(LinearOracle {
        t_star_hat: horizon * best as f64 / n as f64,
        value_hat: objective[best],
        objective,
        unimodal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{solve_linear, switch_time};
    use crate::model::ModelParams;

    fn model(g0: f64) -> Model {
        Model::new(ModelParams {
            rho: 0.5,
            c: 0.1,
            horizon: 1.0,
            gamma0: g0,
            m: 1.0,
            x_init: 1.0,
            ..ModelParams::default()
        })
        .unwrap()
    }

    #[test]
    fn never_advertise_when_weight_is_one() {
        let o = dp_linear(&model(1.0), 1000).unwrap();
        assert_eq!(o.t_star_hat, 1.0);
        assert!(o.unimodal);
    }

    #[test]
    fn matches_closed_form() {
        let m = model(1.2);
        let o = dp_linear(&m, 10_000).unwrap();
        assert!((o.t_star_hat - switch_time(&m)).abs() <= 1e-4);
        let sol = solve_linear(&m).unwrap();
        assert!((o.value_hat - sol.value(0.0, 1.0)).abs() < 1e-3);
        assert!(o.unimodal);
    }

    #[test]
    fn grid_validation() {
        assert!(dp_linear(&model(1.2), 50).is_err());
        assert!(Grid2D::new(0.0, 1.0, 8, 100, BoundaryMode::Reflecting).is_err());
        assert!(Grid2D::new(1.0, 0.0, 100, 100, BoundaryMode::Reflecting).is_err());
        let g = Grid2D::new(0.0, 4.0, 401, 100, BoundaryMode::Extrapolating).unwrap();
        assert_eq!(g.x(400), 4.0);
        assert!((g.dx() - 0.01).abs() < 1e-15);
        assert!(ControlGrid::Finite(vec![]).validate().is_err());
        assert!(ControlGrid::Interval { lo: 1.0, hi: 0.5 }
            .validate()
            .is_err());
    }
}
