//! Backward integration of the generalized Riccati equation
//!
//! ```text
//! dP/dt = (2ρ - σ1²) P + (1 + σ1σ2)² P² / (e^{-ct} + σ2² P),
//! P(T) = -γ,   e^{-ct} + σ2² P > 0.
//! ```
//!
//! The equation is integrated in reversed time `τ = T - t`. Close to a
//! breakdown the independent variable is switched so that the singular
//! quantity becomes the integration variable:
//!
//! * `σ2 > 0`: the denominator `D` collapses to zero while `P` stays bounded;
//!   `τ` is integrated as a function of `D` down to `D = 0`.
//! * `σ2 = 0`: `P` escapes to `-∞`; `Q = 1/P` obeys a linear equation that is
//!   integrated through its zero.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lq::coeffs::{classify_wellposedness, riccati_coeffs, CaseLabel, Classification};
use crate::model::Model;
use crate::ode::{self, Dp45, Halt, Node};

/// Fraction of `e^{-ct}` below which the denominator is treated as singular.
const DENOM_SWITCH: f64 = 1e-3;
/// Multiple of `max(γ, 1)` above which `|P|` is treated as escaping.
const ESCAPE_SWITCH: f64 = 1e3;

#[derive(Debug, Clone, Copy)]
struct Rhs {
    a: f64,
    b2: f64,
    c: f64,
    s2sq: f64,
}

impl Rhs {
    fn denom(&self, t: f64, p: f64) -> f64 {
        (-self.c * t).exp() + self.s2sq * p
    }

    /// `dP/dt`.
    fn eval(&self, t: f64, p: f64) -> f64 {
        self.a * p + self.b2 * p * p / self.denom(t, p)
    }
}

/// Grid solution of the Riccati equation with breakdown diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    /// Ascending times; the last is `T`.
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    /// Exact right-hand side `dP/dt` at each node.
    pub dp: Vec<f64>,
    pub t_lo: f64,
    pub horizon: f64,
    pub well_posed: bool,
    /// Breakdown time, if it lies in `[t_lo, T]`.
    pub t_blow: Option<f64>,
    pub case_label: CaseLabel,
    /// Closed-form advisory verdicts; absent for `σ2 = 0`.
    pub classification: Option<Classification>,
    pub tol: f64,
    #[serde(skip)]
    rhs: Rhs,
    rho: f64,
    sigma1: f64,
    sigma2: f64,
}

pub fn riccati_integrate(model: &Model, t_lo: f64, tol: f64) -> Result<RiccatiSolution> {
    let p = model.params();
    let horizon = p.horizon;
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol > 0 required (got {tol})")));
    }
    if !(t_lo < horizon) {
        return Err(Error::Precondition(format!(
            "t_lo < T required (got t_lo = {t_lo}, T = {horizon})"
        )));
    }
    let classification = if p.sigma2 > 0.0 {
        Some(classify_wellposedness(&riccati_coeffs(p)?, horizon))
    } else {
        None
    };
    let rhs = Rhs {
        a: 2.0 * p.rho - p.sigma1 * p.sigma1,
        b2: (1.0 + p.sigma1 * p.sigma2).powi(2),
        c: p.c,
        s2sq: p.sigma2 * p.sigma2,
    };
    let gamma = model.gamma();
    let tau_end = horizon - t_lo;
    let solver = Dp45 {
        tol,
        h_max: tau_end / 50.0,
        h_min: 1e-15 * tau_end.max(1.0),
    };
    let at = |tau: f64| horizon - tau;

    // Phase 1: P as a function of τ.
    let escape = ESCAPE_SWITCH * gamma.max(1.0);
    let singular = |tau: f64, y: f64| {
        if rhs.s2sq > 0.0 {
            rhs.denom(at(tau), y) < DENOM_SWITCH * (-rhs.c * at(tau)).exp()
        } else {
            y.abs() > escape
        }
    };
    let (nodes, halt) = solver.run(
        |tau, y| -rhs.eval(at(tau), y),
        0.0,
        -gamma,
        tau_end,
        |tau, y| y < 0.0 && rhs.denom(at(tau), y) > 0.0,
        |n| singular(n.t, n.y),
    );
    let mut out: Vec<(f64, f64)> = nodes.iter().map(|n| (at(n.t), n.y)).collect();
    let mut t_blow = None;
    match halt {
        Halt::End => {}
        Halt::StepUnderflow => {
            // Only reachable if the switch threshold was skipped over.
            t_blow = Some(at(nodes.last().unwrap().t));
        }
        Halt::Event => {
            let last = *nodes.last().unwrap();
            let tail = if rhs.s2sq > 0.0 {
                denominator_phase(&rhs, &solver, horizon, tau_end, last)
            } else {
                escape_phase(&rhs, &solver, horizon, tau_end, last)
            };
            out.extend(tail.nodes.iter().skip(1));
            t_blow = tail.t_blow;
        }
    }
    out.reverse();
    let well_posed = t_blow.is_none();
    let t: Vec<f64> = out.iter().map(|n| n.0).collect();
    let pv: Vec<f64> = out.iter().map(|n| n.1).collect();
    let dp = t.iter().zip(&pv).map(|(&t, &p)| rhs.eval(t, p)).collect();
    let case_label = classification.map_or(CaseLabel::DegenerateSigma2, |c| c.case_label);
    Ok(RiccatiSolution {
        t,
        p: pv,
        dp,
        t_lo,
        horizon,
        well_posed,
        t_blow,
        case_label,
        classification,
        tol,
        rhs,
        rho: p.rho,
        sigma1: p.sigma1,
        sigma2: p.sigma2,
    })
}

struct Tail {
    /// `(t, P)` nodes; the first repeats the switch node.
    nodes: Vec<(f64, f64)>,
    t_blow: Option<f64>,
}

/// Finds `s*` in the last step with `g(s*) = target`, where `g` is the state
/// after one step of size `s* - s0` from `start`, by Newton iteration.
fn land_on<F>(f: &F, start: &Node, mut s: f64, target: f64) -> Option<(f64, f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let ok = |_: f64, y: f64| y.is_finite();
    let mut y = start.y;
    for _ in 0..30 {
        let trial = ode::step(f, &ok, start.t, start.y, start.dy, s - start.t)?;
        y = trial.y;
        let slope = trial.dy;
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let ds = (target - y) / slope;
        s += ds;
        if ds.abs() <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
            break;
        }
    }
    Some((s, y))
}

/// `σ2 > 0`: integrate `τ(D)` from the switch value of `D` down to zero.
fn denominator_phase(rhs: &Rhs, solver: &Dp45, horizon: f64, tau_end: f64, last: Node) -> Tail {
    let at = |tau: f64| horizon - tau;
    let p_of = |z: f64, tau: f64| (z - (-rhs.c * at(tau)).exp()) / rhs.s2sq;
    // dD/dτ = c e^{-ct} - σ2² dP/dt
    let dtau_dz = |z: f64, tau: f64| {
        let t = at(tau);
        let p = p_of(z, tau);
        let f = rhs.a * p + rhs.b2 * p * p / z;
        1.0 / (rhs.c * (-rhs.c * t).exp() - rhs.s2sq * f)
    };
    let z0 = rhs.denom(at(last.t), last.y);
    let span = z0;
    let sub = Dp45 {
        tol: solver.tol,
        h_max: span / 20.0,
        h_min: 1e-15 * span,
    };
    let (nodes, halt) = sub.run(
        dtau_dz,
        z0,
        last.t,
        0.0,
        |z, tau| z >= 0.0 && tau.is_finite() && dtau_dz(z, tau) < 0.0 || z == 0.0,
        |n| n.y >= tau_end,
    );
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(nodes.len());
    for n in &nodes {
        if n.y >= tau_end || n.t <= 0.0 {
            break;
        }
        out.push((at(n.y), p_of(n.t, n.y)));
    }
    match halt {
        Halt::Event => {
            let k = nodes.len() - 2;
            let (a, b) = (nodes[k], nodes[k + 1]);
            let guess = a.t + (tau_end - a.y) / (b.y - a.y) * (b.t - a.t);
            let z = land_on(&dtau_dz, &a, guess, tau_end).map_or(guess, |r| r.0);
            out.push((at(tau_end), p_of(z, tau_end)));
            Tail {
                nodes: out,
                t_blow: None,
            }
        }
        _ => {
            let end = nodes.last().unwrap();
            Tail {
                nodes: out,
                t_blow: Some(at(end.y)),
            }
        }
    }
}

/// `σ2 = 0`: integrate `Q = 1/P`, linear in `τ`, until it reaches zero.
fn escape_phase(rhs: &Rhs, solver: &Dp45, horizon: f64, tau_end: f64, last: Node) -> Tail {
    let at = |tau: f64| horizon - tau;
    let dq = |tau: f64, q: f64| rhs.a * q + rhs.b2 * (rhs.c * at(tau)).exp();
    let (nodes, halt) = solver.run(
        dq,
        last.t,
        1.0 / last.y,
        tau_end,
        |_, q| q.is_finite(),
        |n| n.y >= 0.0,
    );
    let mut out: Vec<(f64, f64)> = nodes
        .iter()
        .take_while(|n| n.y < 0.0)
        .map(|n| (at(n.t), 1.0 / n.y))
        .collect();
    match halt {
        Halt::Event => {
            let k = nodes.len() - 2;
            let (a, b) = (nodes[k], nodes[k + 1]);
            let guess = a.t + (0.0 - a.y) / (b.y - a.y) * (b.t - a.t);
            let tau_zero = land_on(&dq, &a, guess, 0.0).map_or(guess, |r| r.0);
            Tail {
                nodes: std::mem::take(&mut out),
                t_blow: Some(at(tau_zero)),
            }
        }
        Halt::End => Tail {
            nodes: out,
            t_blow: None,
        },
        Halt::StepUnderflow => {
            let end = at(nodes.last().unwrap().t);
            Tail {
                nodes: out,
                t_blow: Some(end),
            }
        }
    }
}

/// Closed-form solution for `σ2 = 0` via `Q = 1/P`:
/// `Q(t) = -e^{A(T-t)}/γ + e^{-At}(e^{(A+c)T} - e^{(A+c)t})/(A+c)`
/// with `A = 2ρ - σ1²`. Returns `None` past the breakdown.
pub fn bernoulli_p(model: &Model, t: f64) -> Option<f64> {
    let q = bernoulli_q(model, t);
    (q < 0.0).then(|| 1.0 / q)
}

fn bernoulli_q(model: &Model, t: f64) -> f64 {
    let p = model.params();
    let a = 2.0 * p.rho - p.sigma1 * p.sigma1;
    let k = a + p.c;
    let horizon = p.horizon;
    // ∫_t^T e^{A(s-t)} e^{cs} ds
    let integral = if k == 0.0 {
        (horizon - t) * (-a * t).exp()
    } else {
        (-a * t).exp() * (k * t).exp() * (k * (horizon - t)).exp_m1() / k
    };
    -(a * (horizon - t)).exp() / model.gamma() + integral
}

/// Latest `t < T` at which the closed-form `Q` vanishes, if any in `[t_lo, T]`.
pub fn bernoulli_blow_time(model: &Model, t_lo: f64) -> Option<f64> {
    let horizon = model.horizon();
    if bernoulli_q(model, t_lo) < 0.0 {
        return None;
    }
    // Q(T) < 0 and Q(t_lo) >= 0; the integral term grows monotonically
    // backwards, so bisect for the unique crossing.
    let (mut lo, mut hi) = (t_lo, horizon);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bernoulli_q(model, mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

impl RiccatiSolution {
    pub fn t_range(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.t_range();
        if t < lo || t > hi || t.is_nan() {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        Ok(())
    }

    /// Monotone cubic Hermite interpolant of `P` using the exact slopes.
    pub fn p_at(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.hermite(t).0)
    }

    fn hermite(&self, t: f64) -> (f64, f64) {
        let i = self.t.partition_point(|&x| x <= t);
        if i == self.t.len() {
            let k = self.t.len() - 1;
            return (self.p[k], self.dp[k]);
        }
        let k = i.saturating_sub(1);
        if self.t[k] == t {
            return (self.p[k], self.dp[k]);
        }
        let h = self.t[k + 1] - self.t[k];
        let (y0, y1) = (self.p[k], self.p[k + 1]);
        let (mut m0, mut m1) = (self.dp[k], self.dp[k + 1]);
        let delta = (y1 - y0) / h;
        if delta == 0.0 {
            m0 = 0.0;
            m1 = 0.0;
        } else {
            let (alpha, beta) = (m0 / delta, m1 / delta);
            if alpha < 0.0 {
                m0 = 0.0;
            }
            if beta < 0.0 {
                m1 = 0.0;
            }
            let r = alpha * alpha + beta * beta;
            if r > 9.0 {
                let s = 3.0 / r.sqrt();
                m0 = s * alpha * delta;
                m1 = s * beta * delta;
            }
        }
        let s = (t - self.t[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let slope = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1;
        (value, slope)
    }

    /// Denominator `e^{-ct} + σ2² P(t)`.
    pub fn denom(&self, t: f64, p: f64) -> f64 {
        self.rhs.denom(t, p)
    }

    /// Right-hand side `dP/dt` at `(t, P)`.
    pub fn rhs(&self, t: f64, p: f64) -> f64 {
        self.rhs.eval(t, p)
    }

    /// Feedback coefficient `k(t) = -(1 + σ1σ2) P / (e^{-ct} + σ2² P)`, so the
    /// optimal control is `u = k(t) x`.
    pub fn gain(&self, t: f64) -> Result<f64> {
        let p = self.p_at(t)?;
        Ok(self.gain_from(t, p))
    }

    pub fn gain_from(&self, t: f64, p: f64) -> f64 {
        -(1.0 + self.sigma1 * self.sigma2) * p / self.denom(t, p)
    }

    /// Closed-loop drift and diffusion coefficients `(a, c)` with
    /// `dx = a x dt + c x dw` for `x >= 0`.
    pub fn closed_loop(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.gain(t)?;
        Ok((-self.rho + k, self.sigma1 + self.sigma2 * k))
    }

    /// Largest `|dP/dt - RHS|` over interval midpoints, measured relative to
    /// `max(1, |RHS|)`.
    pub fn midpoint_residual(&self) -> f64 {
        self.t
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let (p, slope) = self.hermite(mid);
                let f = self.rhs(mid, p);
                (slope - f).abs() / f.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn p0(&self) -> f64 {
        self.p[0]
    }
}
