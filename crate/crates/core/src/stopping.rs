//! Advertising with discretionary launch time.
//!
//! The gap `y` between current goodwill and its target evolves as
//! `dy = (μ - ρy - u) dt + dw`; the firm pays `γ1 u²` per unit time for
//! advertising, `γ2` per unit time of delay, and `y(τ)²` at launch. It
//! minimizes `E[y_τ² + ∫_0^τ (γ1 u² + γ2) dt]` over controls and stopping
//! times `τ`.
//!
//! With `γ2 = 2ργ1` the substitution `U = exp(-v / (2γ1))` turns the
//! continuation HJB into `½U'' + (μ - ρx)U' - ρU = 0`, whose decaying
//! solution is
//!
//! ```text
//! U2(x) = exp(ρ(x - μ/ρ)²) ∫_x^∞ exp(-ρ(s - μ/ρ)²) ds
//!       = √π / (2√ρ) · erfcx(√ρ (x - μ/ρ)).
//! ```
//!
//! Value and slope matching with the obstacle `x²` at `x0` give
//! `((2ρ + 1/γ1) x0 - 2μ) U2(x0) = 1` and `α2 = exp(-x0²/(2γ1)) / U2(x0)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{erfcx, erfcx_reciprocal_excess};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingParams {
    /// Target goodwill.
    pub k: f64,
    pub rho: f64,
    /// Advertising cost weight.
    pub gamma1: f64,
    /// Cost of delay per unit time; must equal `2 ρ γ1`.
    pub gamma2: f64,
}

impl StoppingParams {
    pub fn new(k: f64, rho: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        let sp = Self {
            k,
            rho,
            gamma1,
            gamma2,
        };
        sp.validate()?;
        Ok(sp)
    }

    /// Parameters with `γ2 = 2ργ1` filled in.
    pub fn balanced(k: f64, rho: f64, gamma1: f64) -> Result<Self> {
        Self::new(k, rho, gamma1, 2.0 * rho * gamma1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Precondition("rho > 0 and finite k required".into()));
        }
        if !(self.gamma1 > 1.0) || !self.gamma1.is_finite() {
            return Err(Error::Precondition("gamma1 > 1 required".into()));
        }
        let want = 2.0 * self.rho * self.gamma1;
        if !((self.gamma2 - want).abs() <= 4.0 * f64::EPSILON * want) {
            return Err(Error::Precondition(format!(
                "gamma2 = 2·rho·gamma1 required (expected {want}, got {})",
                self.gamma2
            )));
        }
        Ok(())
    }

    /// `μ = ρ k`.
    pub fn mu(&self) -> f64 {
        self.rho * self.k
    }

    /// Drift of the uncontrolled gap: `μ - ρ y`.
    pub fn drift(&self, y: f64) -> f64 {
        self.mu() - self.rho * y
    }

    fn scaled(&self, x: f64) -> f64 {
        self.rho.sqrt() * (x - self.k)
    }
}

/// The decaying Hopf-Cole solution `U2`.
pub fn u2(sp: &StoppingParams, x: f64) -> Result<f64> {
    Ok(PI.sqrt() / (2.0 * sp.rho.sqrt()) * erfcx(sp.scaled(x))?)
}

/// Logarithmic derivative `U2'/U2 = 2ρ(x - μ/ρ) - 1/U2`, always negative.
pub fn u2_log_slope(sp: &StoppingParams, x: f64) -> Result<f64> {
    Ok(-2.0 * sp.rho.sqrt() * erfcx_reciprocal_excess(sp.scaled(x))?)
}

/// Left side minus right side of the free-boundary equation.
pub fn boundary_residual(sp: &StoppingParams, x: f64) -> Result<f64> {
    let factor = (2.0 * sp.rho + 1.0 / sp.gamma1) * x - 2.0 * sp.mu();
    Ok(factor * u2(sp, x)? - 1.0)
}

/// Free boundary `x0` and multiplier `α2`.
pub fn free_boundary(sp: &StoppingParams) -> Result<(f64, f64)> {
    sp.validate()?;
    let mut lo = 2.0 * sp.mu() / (2.0 * sp.rho + 1.0 / sp.gamma1);
    let mut step = 1.0 / sp.rho.sqrt();
    let mut hi = lo + step;
    // Residual tends to 1/(2ργ1) > 0 as x grows, so the search terminates
    // well inside the stable range.
    while boundary_residual(sp, hi)? <= 0.0 {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        if !hi.is_finite() || sp.scaled(hi) > 1e150 {
            return Err(Error::NoRoot { lo, hi });
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if boundary_residual(sp, mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x0 = if boundary_residual(sp, lo)?.abs() <= boundary_residual(sp, hi)?.abs() {
        lo
    } else {
        hi
    };
    let alpha2 = (-x0 * x0 / (2.0 * sp.gamma1)).exp() / u2(sp, x0)?;
    Ok((x0, alpha2))
}

/// Worst QVI violations over a set of evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QviReport {
    /// Largest `(2ρ + 1/γ1)x² - 2μx - (1 + γ2)` over points in `[0, x0]`
    /// (must be `<= 0`).
    pub stop_region_max: f64,
    /// Largest `|Av - v'²/(4γ1) + γ2|` over continuation points.
    pub pde_residual_max: f64,
    /// Smallest `x² - v(x)` over continuation points (must be `>= 0` up to
    /// rounding).
    pub obstacle_gap_min: f64,
    /// Smallest unclamped optimal control over continuation points.
    pub control_min: f64,
    pub n_stop: usize,
    pub n_continue: usize,
}

impl QviReport {
    pub fn clean(&self, tol: f64) -> bool {
        self.stop_region_max <= 0.0
            && self.pde_residual_max <= tol
            && self.obstacle_gap_min >= -tol
            && self.control_min >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingSolution {
    pub params: StoppingParams,
    pub x0: f64,
    pub alpha2: f64,
    /// Checks on `[0, x0 + 10/√ρ]`, 10³ points on each side of `x0`.
    pub residual_report: QviReport,
    u2_x0: f64,
}

impl StoppingSolution {
    pub fn solve(sp: &StoppingParams) -> Result<Self> {
        let (x0, alpha2) = free_boundary(sp)?;
        let mut sol = Self {
            params: *sp,
            x0,
            alpha2,
            residual_report: QviReport {
                stop_region_max: 0.0,
                pde_residual_max: 0.0,
                obstacle_gap_min: 0.0,
                control_min: 0.0,
                n_stop: 0,
                n_continue: 0,
            },
            u2_x0: u2(sp, x0)?,
        };
        sol.residual_report = sol.qvi_residual(&sol.verification_grid(1000))?;
        Ok(sol)
    }

    /// `n >= 2` points on `[0, x0]` (when `x0 > 0`) and `n` on `(x0, x0 + 10/√ρ]`.
    pub fn verification_grid(&self, n: usize) -> Vec<f64> {
        let mut xs = Vec::with_capacity(2 * n);
        if self.x0 > 0.0 {
            xs.extend((0..n - 1).map(|i| self.x0 * i as f64 / (n - 1) as f64));
            xs.push(self.x0);
        }
        let width = 10.0 / self.params.rho.sqrt();
        xs.extend((1..=n).map(|i| self.x0 + width * i as f64 / n as f64));
        xs
    }

    fn u2(&self, x: f64) -> f64 {
        // Every x >= x0 is inside the stable range because x0 itself is.
        u2(&self.params, x).expect("argument above the free boundary")
    }

    fn log_slope(&self, x: f64) -> f64 {
        u2_log_slope(&self.params, x).expect("argument above the free boundary")
    }

    /// Optimal cost from gap `x`.
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.x0 {
            x * x
        } else {
            // -2γ1 ln(α2 U2(x)) written relative to x0 to avoid cancellation
            self.x0 * self.x0 + 2.0 * self.params.gamma1 * (self.u2_x0 / self.u2(x)).ln()
        }
    }

    pub fn value_derivative(&self, x: f64) -> f64 {
        if x <= self.x0 {
            2.0 * x
        } else {
            -2.0 * self.params.gamma1 * self.log_slope(x)
        }
    }

    pub fn value_second_derivative(&self, x: f64) -> f64 {
        if x <= self.x0 {
            2.0
        } else {
            let sp = &self.params;
            let r = self.log_slope(x);
            -2.0 * sp.gamma1 * (2.0 * sp.rho + 2.0 * sp.rho * (x - sp.k) * r - r * r)
        }
    }

    /// Continuation-branch control `v'/(2γ1) = 1/U2 - 2ρ(y - μ/ρ)` without
    /// the stopping cut-off or clamping.
    pub fn control_unclamped(&self, y: f64) -> f64 {
        -self.log_slope(y)
    }

    /// Optimal advertising rate; zero in the stopping region.
    pub fn control(&self, y: f64) -> f64 {
        if y <= self.x0 {
            0.0
        } else {
            self.control_unclamped(y).max(0.0)
        }
    }

    /// Limit of the control at the boundary from the continuation side,
    /// equal to `x0/γ1`.
    pub fn u_at_boundary(&self) -> f64 {
        self.control_unclamped(self.x0)
    }

    pub fn stops(&self, y: f64) -> bool {
        y <= self.x0
    }

    /// HJB part `½v'' + (μ - ρx)v' - v'²/(4γ1) + γ2` of the QVI.
    pub fn hjb_residual(&self, x: f64) -> f64 {
        let sp = &self.params;
        let v1 = self.value_derivative(x);
        let v2 = self.value_second_derivative(x);
        0.5 * v2 + sp.drift(x) * v1 - v1 * v1 / (4.0 * sp.gamma1) + sp.gamma2
    }

    /// Stopping-region inequality `(2ρ + 1/γ1)x² - 2μx - (1 + γ2) <= 0`.
    pub fn stop_inequality(&self, x: f64) -> f64 {
        let sp = &self.params;
        (2.0 * sp.rho + 1.0 / sp.gamma1) * x * x - 2.0 * sp.mu() * x - (1.0 + sp.gamma2)
    }

    /// Evaluates the QVI conditions at each point. The stopping-region test
    /// only covers `0 <= x <= x0`.
    pub fn qvi_residual(&self, xs: &[f64]) -> Result<QviReport> {
        let mut report = QviReport {
            stop_region_max: f64::NEG_INFINITY,
            pde_residual_max: 0.0,
            obstacle_gap_min: f64::INFINITY,
            control_min: f64::INFINITY,
            n_stop: 0,
            n_continue: 0,
        };
        for &x in xs {
            if x <= self.x0 {
                if x >= 0.0 {
                    report.stop_region_max = report.stop_region_max.max(self.stop_inequality(x));
                    report.n_stop += 1;
                }
            } else {
                u2(&self.params, x)?;
                let scale = 1.0 + self.params.gamma2;
                report.pde_residual_max = report
                    .pde_residual_max
                    .max(self.hjb_residual(x).abs() / scale);
                report.obstacle_gap_min = report.obstacle_gap_min.min(x * x - self.value(x));
                report.control_min = report.control_min.min(self.control_unclamped(x));
                report.n_continue += 1;
            }
        }
        Ok(report)
    }
}

/// Solves the free boundary and assembles the value and policy.
pub fn solve_stopping(sp: &StoppingParams) -> Result<StoppingSolution> {
    StoppingSolution::solve(sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> StoppingParams {
        StoppingParams::balanced(1.0, 0.5, 2.0).unwrap()
    }

    /// Oracle: composite Simpson on `∫_x^∞ exp(ρ(x-m)² - ρ(s-m)²) ds`.
    fn u2_quadrature(sp: &StoppingParams, x: f64) -> f64 {
        let m = sp.k;
        let width = 40.0 / sp.rho.sqrt();
        let n = 200_000;
        let h = width / n as f64;
        let f = |s: f64| (sp.rho * ((x - m).powi(2) - (s - m).powi(2))).exp();
        let mut acc = f(x) + f(x + width);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(x + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn rejects_bad_params() {
        assert!(StoppingParams::new(1.0, 0.5, 2.0, 2.1).is_err());
        assert!(StoppingParams::balanced(1.0, 0.5, 1.0).is_err());
        assert!(StoppingParams::balanced(1.0, -0.5, 2.0).is_err());
    }

    #[test]
    fn u2_at_centre_is_half_gaussian_integral() {
        let sp = StoppingParams::balanced(0.3, 1.0, 2.0).unwrap();
        assert!((u2(&sp, 0.3).unwrap() - PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn u2_matches_quadrature() {
        let sp = fixture();
        assert!((u2(&sp, 3.0).unwrap() - 0.42136922928805447322).abs() < 1e-14);
        for x in [-2.0, 0.0, 1.0, 2.5, 6.0] {
            let q = u2_quadrature(&sp, x);
            assert!(((u2(&sp, x).unwrap() - q) / q).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn u2_tail_asymptote() {
        let sp = fixture();
        let x = sp.k + 10.0 / sp.rho.sqrt();
        let ratio = u2(&sp, x).unwrap() * 2.0 * sp.rho * (x - sp.k);
        assert!((ratio - 1.0).abs() < 5e-3);
    }

    #[test]
    fn u2_solves_first_order_identity() {
        let sp = fixture();
        let h = 1e-5;
        for x in [-1.0, 0.5, 1.7, 4.0] {
            let fd = (u2(&sp, x + h).unwrap() - u2(&sp, x - h).unwrap()) / (2.0 * h);
            let exact = 2.0 * sp.rho * (x - sp.k) * u2(&sp, x).unwrap() - 1.0;
            assert!((fd - exact).abs() < 1e-8, "x = {x}");
            let slope = u2_log_slope(&sp, x).unwrap() * u2(&sp, x).unwrap();
            assert!((slope - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn u2_overflow_reported() {
        let sp = fixture();
        assert!(matches!(u2(&sp, -100.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn fixture_boundary() {
        let sp = fixture();
        let (x0, alpha2) = free_boundary(&sp).unwrap();
        assert!((x0 - 1.3603866416114934929).abs() < 1e-13);
        assert!((alpha2 - 0.65515414197233740866).abs() < 1e-13);
        assert!(boundary_residual(&sp, x0).unwrap().abs() <= 1e-12);
        let lo = 2.0 * sp.mu() / (2.0 * sp.rho + 1.0 / sp.gamma1);
        assert_eq!(boundary_residual(&sp, lo).unwrap(), -1.0);
    }

    #[test]
    fn fixture_value_and_policy() {
        let sol = solve_stopping(&fixture()).unwrap();
        let x = sol.x0 + 1.0;
        assert!((sol.value(x) - 4.0885972513256318428).abs() < 1e-12);
        assert!((sol.control(x) - 0.46039261614254170869).abs() < 1e-12);
        assert!((sol.u_at_boundary() - sol.x0 / 2.0).abs() < 1e-10);
        assert_eq!(sol.value(sol.x0), sol.x0 * sol.x0);
        assert_eq!(sol.control(sol.x0), 0.0);
    }

    #[test]
    fn smooth_fit() {
        let sol = solve_stopping(&fixture()).unwrap();
        let h = 1e-7;
        let right = (sol.value(sol.x0 + h) - sol.value(sol.x0)) / h;
        assert!((right - 2.0 * sol.x0).abs() < 1e-6);
        let analytic = -2.0 * sol.params.gamma1 * u2_log_slope(&sol.params, sol.x0).unwrap();
        assert!((analytic - 2.0 * sol.x0).abs() < 1e-10);
    }

    #[test]
    fn value_below_obstacle() {
        let sol = solve_stopping(&fixture()).unwrap();
        for i in 1..=1000 {
            let x = sol.x0 + 10.0 * i as f64 / 1000.0;
            assert!(sol.value(x) <= x * x, "x = {x}");
        }
    }

    #[test]
    fn fixture_report_is_clean() {
        let sol = solve_stopping(&fixture()).unwrap();
        let r = sol.residual_report;
        assert!(r.clean(1e-8), "{r:?}");
        assert_eq!(r.n_stop, 1000);
        assert_eq!(r.n_continue, 1000);
        assert!(sol.stop_inequality(0.0) == -(1.0 + sol.params.gamma2));
    }

    #[test]
    fn hopf_cole_transform_residual() {
        let sol = solve_stopping(&fixture()).unwrap();
        let sp = sol.params;
        // U = exp(-v/(2γ1)) = α2 U2; check ½U'' + (μ-ρx)U' - ρU = 0 via U'/U, U''/U.
        for x in sol
            .verification_grid(200)
            .into_iter()
            .filter(|&x| x > sol.x0)
        {
            let r = u2_log_slope(&sp, x).unwrap();
            let second = 2.0 * sp.rho + 2.0 * sp.rho * (x - sp.k) * r;
            let res = 0.5 * second + sp.drift(x) * r - sp.gamma2 / (2.0 * sp.gamma1);
            assert!(res.abs() < 1e-8, "x = {x}: {res}");
        }
    }

    #[test]
    fn ratio_nondecreasing() {
        let sol = solve_stopping(&fixture()).unwrap();
        let sp = sol.params;
        let f = |x: f64| sol.alpha2 * u2(&sp, x).unwrap() * (x * x / (2.0 * sp.gamma1)).exp();
        let mut prev = f(sol.x0);
        for i in 1..=500 {
            let x = sol.x0 + 8.0 * i as f64 / 500.0;
            let cur = f(x);
            assert!(cur >= prev * (1.0 - 1e-14));
            prev = cur;
        }
    }

    #[test]
    fn control_tail_decays() {
        let sol = solve_stopping(&fixture()).unwrap();
        let mut prev = sol.control(sol.x0 + 1e-9);
        for x in [2.0, 5.0, 20.0, 1e3, 1e6] {
            let u = sol.control(x);
            assert!(u > 0.0 && u < prev);
            prev = u;
        }
        assert!((sol.control(1e6) * (1e6 - 1.0) - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn boundary_lhs_increasing(k in 0.0..3.0f64, rho in 0.1..2.0f64, g1 in 1.01..5.0f64) {
            let sp = StoppingParams::balanced(k, rho, g1).unwrap();
            let (x0, _) = free_boundary(&sp).unwrap();
            prop_assert!(boundary_residual(&sp, x0).unwrap().abs() <= 1e-12);
            // Increasing up to the root; above it the residual peaks and
            // decays towards 1/(2ργ1) without changing sign.
            let lo = 2.0 * sp.mu() / (2.0 * rho + 1.0 / g1);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let x = lo + (x0 - lo) * i as f64 / 200.0;
                let g = boundary_residual(&sp, x).unwrap();
                prop_assert!(g > prev);
                prev = g;
            }
            for i in 1..=200 {
                let x = x0 + 40.0 * i as f64 / 200.0 / rho.sqrt();
                prop_assert!(boundary_residual(&sp, x).unwrap() > 0.0);
            }
        }

        #[test]
        fn boundary_control_identity(k in 0.0..3.0f64, rho in 0.1..2.0f64, g1 in 1.01..5.0f64) {
            let sol = solve_stopping(&StoppingParams::balanced(k, rho, g1).unwrap()).unwrap();
            prop_assert!((sol.u_at_boundary() - sol.x0 / g1).abs() <= 1e-10 * (1.0 + sol.x0));
            prop_assert!(sol.residual_report.clean(1e-8), "{:?}", sol.residual_report);
        }
    }
}
