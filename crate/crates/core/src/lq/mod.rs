//! Indefinite linear-quadratic advertising problem with `σ0 = 0`:
//! maximize `E[γ x_T² - ∫ e^{-ct} u² dt]` over nonnegative controls.
//!
//! The value is `-P(t) x²` where `P` solves the generalized Riccati equation
//! in [`riccati`]; the optimal control is linear feedback `u = k(t) x`.

pub mod coeffs;
pub mod riccati;

use std::sync::Arc;

pub use coeffs::{
    classify_wellposedness, riccati_coeffs, CaseLabel, Classification, RiccatiCoeffs,
};
pub use riccati::{bernoulli_blow_time, bernoulli_p, riccati_integrate, RiccatiSolution};

use crate::error::{Error, Result};
use crate::policy::{GainFn, Policy};

/// Optimal feedback `u(t, x) = k(t) x` on the solution's time range.
pub fn lq_feedback(sol: &Arc<RiccatiSolution>) -> Result<Policy> {
    if !sol.well_posed {
        return Err(Error::NotWellPosed {
            t_blow: sol.t_blow.unwrap_or(f64::NAN),
        });
    }
    let shared = Arc::clone(sol);
    let gain: GainFn = Arc::new(move |t| shared.gain(t));
    Ok(Policy::LinearFeedback {
        gain,
        domain: sol.t_range(),
    })
}

/// Closed-loop coefficients `(a(t), c(t))`: under the optimal feedback,
/// `dx = a x dt + c x dw` for `x >= 0`.
pub fn closed_loop_coeffs(sol: &RiccatiSolution, t: f64) -> Result<(f64, f64)> {
    if !sol.well_posed {
        return Err(Error::NotWellPosed {
            t_blow: sol.t_blow.unwrap_or(f64::NAN),
        });
    }
    sol.closed_loop(t)
}

/// Deterministic closed-loop moments from `x` at `t_lo`:
/// `E[x_T] = x exp(∫a)`, `E[x_T²] = x² exp(∫(2a + c²))`, and the expected
/// discounted control cost `∫ e^{-ct} k² E[x_t²] dt`. Midpoint quadrature
/// with `n` panels.
pub fn closed_loop_moments(
    sol: &RiccatiSolution,
    x: f64,
    discount: f64,
    n: usize,
) -> Result<Moments> {
    let (lo, hi) = sol.t_range();
    let h = (hi - lo) / n as f64;
    let mut int_a = 0.0;
    let mut int_second = 0.0;
    let mut cost = 0.0;
    for i in 0..n {
        let t = lo + (i as f64 + 0.5) * h;
        let (a, c) = closed_loop_coeffs(sol, t)?;
        let k = sol.gain(t)?;
        // second moment at the midpoint: half a panel beyond the running integral
        let second_mid = (int_second + 0.5 * h * (2.0 * a + c * c)).exp();
        cost += (-discount * t).exp() * k * k * second_mid * h;
        int_a += a * h;
        int_second += (2.0 * a + c * c) * h;
    }
    Ok(Moments {
        mean: x * int_a.exp(),
        second: x * x * int_second.exp(),
        control_cost: x * x * cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub control_cost: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelParams};

    fn fixture() -> Model {
        Model::new(ModelParams {
            rho: 0.5,
            c: 0.1,
            horizon: 1.0,
            sigma1: 0.2,
            sigma2: 0.5,
            gamma0: 0.5,
            x_init: 1.0,
            ..ModelParams::default()
        })
        .unwrap()
    }

    #[test]
    fn feedback_examples() {
        let sol = Arc::new(riccati_integrate(&fixture(), 0.0, 1e-10).unwrap());
        let pol = lq_feedback(&sol).unwrap();
        assert_eq!(pol.evaluate(0.3, 0.0).unwrap(), 0.0);
        let u1 = pol.evaluate(0.3, 1.5).unwrap();
        assert!(u1 > 0.0);
        assert!((pol.evaluate(0.3, 3.0).unwrap() - 2.0 * u1).abs() < 1e-15);
        assert!(pol.evaluate(1.2, 1.0).is_err());
    }

    #[test]
    fn closed_loop_identities() {
        let sol = riccati_integrate(&fixture(), 0.0, 1e-10).unwrap();
        for t in [0.0, 0.4, 1.0] {
            let (a, _) = closed_loop_coeffs(&sol, t).unwrap();
            assert!((a - sol.gain(t).unwrap() + 0.5).abs() < 1e-15);
        }
        let m = Model::new(ModelParams {
            sigma2: 0.0,
            ..*fixture().params()
        })
        .unwrap();
        let sol = riccati_integrate(&m, 0.0, 1e-10).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert_eq!(closed_loop_coeffs(&sol, t).unwrap().1, 0.2);
        }
    }

    #[test]
    fn moments_reproduce_value() {
        // γ E[x_T²] - E∫ e^{-ct} u² dt = -P(0) x²
        let m = fixture();
        let sol = riccati_integrate(&m, 0.0, 1e-11).unwrap();
        let mo = closed_loop_moments(&sol, 1.0, 0.1, 20_000).unwrap();
        let objective = m.gamma() * mo.second - mo.control_cost;
        assert!(
            (objective + sol.p0()).abs() < 1e-7,
            "{objective} vs {}",
            -sol.p0()
        );
    }

    #[test]
    fn not_well_posed_rejected() {
        let m = Model::new(ModelParams {
            rho: 0.5,
            c: 0.0,
            horizon: 4.0,
            sigma2: 1.0,
            gamma0: 0.8,
            ..ModelParams::default()
        })
        .unwrap();
        let sol = Arc::new(riccati_integrate(&m, 0.0, 1e-9).unwrap());
        assert!(matches!(lq_feedback(&sol), Err(Error::NotWellPosed { .. })));
    }
}
