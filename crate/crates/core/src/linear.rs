//! Linear reward, linear advertising cost.
//!
//! With `U = [0, m]` the value function is affine in goodwill,
//! `v(t, x) = γ(t) x + b(t)` with `γ(t) = γ e^{-ρ(T-t)}`, and the optimal
//! policy is bang-bang: idle until `t*` where `γ(t*) = e^{-c t*}`, then
//! advertise at the maximal rate. Neither depends on the noise intensities.
//!
//! The budget-constrained variant maximizes `E[x_T]` subject to
//! `E ∫ e^{-ct} u dt <= M`; the optimum spends the whole budget on `(t*, T]`.

use crate::error::{Error, Result};
use crate::model::{discount_integral, Model};
use crate::policy::Policy;

/// Switching time `(ρT - ln γ)/(ρ + c)`, not clamped to `[0, T]`.
pub fn switch_time(model: &Model) -> f64 {
    let p = model.params();
    p.horizon - p.gamma0.ln() / (p.rho + p.c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    /// Unclamped switching time; may fall outside `[0, T]`.
    pub t_star: f64,
    t_split: f64,
    gamma: f64,
    rho: f64,
    c: f64,
    m: f64,
    horizon: f64,
}

impl LinearSolution {
    /// Switching time clamped into `[0, T]`.
    pub fn t_split(&self) -> f64 {
        self.t_split
    }

    /// Marginal value of goodwill, `γ e^{-ρ(T-t)}`.
    pub fn gamma_at(&self, t: f64) -> f64 {
        self.gamma * (-self.rho * (self.horizon - t)).exp()
    }

    /// Constant term of the value while advertising at rate `m` on `(t, T]`.
    pub fn b1(&self, t: f64) -> f64 {
        let gain = self.m * self.gamma / self.rho * -(-self.rho * (self.horizon - t)).exp_m1();
        gain - self.m * discount_integral(self.c, t, self.horizon)
    }

    pub fn b1_prime(&self, t: f64) -> f64 {
        -self.m * self.gamma_at(t) + self.m * (-self.c * t).exp()
    }

    pub fn b(&self, t: f64) -> f64 {
        self.b1(t.max(self.t_split))
    }

    /// Derivative of `b`; zero before the switch.
    pub fn b_prime(&self, t: f64) -> f64 {
        if t <= self.t_split {
            0.0
        } else {
            self.b1_prime(t)
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.gamma_at(t) * x + self.b(t)
    }

    pub fn policy(&self) -> Policy {
        linear_policy(self)
    }
}

pub fn solve_linear(model: &Model) -> Result<LinearSolution> {
    let p = model.params();
    if p.c <= 0.0 {
        return Err(Error::Precondition(
            "c > 0 is required for the linear problem".into(),
        ));
    }
    let t_star = switch_time(model);
    Ok(LinearSolution {
        t_star,
        t_split: t_star.clamp(0.0, p.horizon),
        gamma: model.gamma(),
        rho: p.rho,
        c: p.c,
        m: p.m,
        horizon: p.horizon,
    })
}

/// Bang-bang policy: `0` for `t <= t*`, `m` afterwards.
pub fn linear_policy(sol: &LinearSolution) -> Policy {
    Policy::BangBang {
        t_star: sol.t_star,
        m: sol.m,
    }
}

#[derive(Debug, Clone)]
pub struct BudgetSolution {
    pub budget: f64,
    pub lambda_star: f64,
    /// Switching time in `[0, T]`.
    pub t_star: f64,
    pub policy: Policy,
    rho: f64,
    c: f64,
    m: f64,
    horizon: f64,
}

impl BudgetSolution {
    /// Exact discounted spend `∫ e^{-ct} u(t) dt` of the policy.
    pub fn discounted_spend(&self) -> f64 {
        self.m * discount_integral(self.c, self.t_star, self.horizon)
    }

    /// `E[x_T]` from initial goodwill `x` under the optimal policy.
    pub fn expected_terminal(&self, x: f64) -> f64 {
        x * (-self.rho * self.horizon).exp()
            + self.m / self.rho * -(-self.rho * (self.horizon - self.t_star)).exp_m1()
    }
}

/// Largest budget that can be spent on `[0, T]`.
pub fn budget_bound(model: &Model) -> f64 {
    let p = model.params();
    p.m * discount_integral(p.c, 0.0, p.horizon)
}

pub fn solve_budget(model: &Model, budget: f64) -> Result<BudgetSolution> {
    let p = model.params();
    if !(budget > 0.0) {
        return Err(Error::DegenerateBudget(budget));
    }
    if p.c <= 0.0 {
        return Err(Error::Precondition(
            "c > 0 is required for the budget problem".into(),
        ));
    }
    let bound = budget_bound(model);
    if budget > bound * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::InfeasibleBudget { budget, bound });
    }
    // Binding budget: (m/c)(e^{-c t*} - e^{-cT}) = M, written so that small
    // budgets keep full precision.
    let excess = (p.c * budget / p.m * (p.c * p.horizon).exp()).ln_1p();
    let t_star = (p.horizon - excess / p.c).clamp(0.0, p.horizon);
    let log_q = -p.c * p.horizon + excess; // ln(cM/m + e^{-cT})
    let lambda_star = (-p.rho * p.horizon - (p.rho + p.c) / p.c * log_q).exp();
    Ok(BudgetSolution {
        budget,
        lambda_star,
        t_star,
        policy: Policy::BangBang { t_star, m: p.m },
        rho: p.rho,
        c: p.c,
        m: p.m,
        horizon: p.horizon,
    })
}
