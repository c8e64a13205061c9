//! Model constants and the controlled goodwill SDE
//!
//! ```text
//! dx = (u - rho x) dt + (sigma0 + sigma1 |x| + sigma2 u) dw
//! ```
//!
//! [`ModelParams`] is the raw, serializable parameter record. [`Model`] is a
//! validated copy that also carries the discounted terminal weight
//! `gamma = gamma0 * exp(-c T)`; every solver takes a `&Model`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, Violations};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Goodwill deterioration rate.
    pub rho: f64,
    /// Discount rate.
    pub c: f64,
    /// Launch time (planning horizon).
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Maximum advertising rate, `U = [0, m]` for the linear problems.
    pub m: f64,
    /// Terminal reward weight.
    pub gamma0: f64,
    /// Initial goodwill.
    pub x_init: f64,
}

impl ModelParams {
    pub fn drift(&self, x: f64, u: f64) -> f64 {
        -self.rho * x + u
    }

    pub fn diffusion(&self, x: f64, u: f64) -> f64 {
        self.sigma0 + self.sigma1 * x.abs() + self.sigma2 * u
    }

    /// Returns every violated constraint; NaN fails every check.
    pub fn validate(&self) -> std::result::Result<(), Violations> {
        let checks: [(bool, &'static str, &'static str); 9] = [
            (self.rho > 0.0, "rho", "rho > 0"),
            (self.horizon > 0.0, "T", "T > 0"),
            (self.m > 0.0, "m", "m > 0"),
            (self.gamma0 > 0.0, "gamma0", "gamma0 > 0"),
            (self.sigma0 >= 0.0, "sigma0", "sigma0 ≥ 0"),
            (self.sigma1 >= 0.0, "sigma1", "sigma1 ≥ 0"),
            (self.sigma2 >= 0.0, "sigma2", "sigma2 ≥ 0"),
            (self.c >= 0.0, "c", "c ≥ 0"),
            (self.x_init >= 0.0, "x_init", "x_init ≥ 0"),
        ];
        let mut violations: Vec<Violation> = checks
            .iter()
            .filter(|(ok, _, _)| !ok)
            .map(|&(_, field, constraint)| Violation { field, constraint })
            .collect();
        let finite = [
            self.rho,
            self.c,
            self.horizon,
            self.sigma0,
            self.sigma1,
            self.sigma2,
            self.m,
            self.gamma0,
            self.x_init,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite && violations.is_empty() {
            violations.push(Violation {
                field: "model",
                constraint: "all parameters finite",
            });
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Violations(violations))
        }
    }

    pub fn with_sigmas(mut self, sigma0: f64, sigma1: f64, sigma2: f64) -> Self {
        self.sigma0 = sigma0;
        self.sigma1 = sigma1;
        self.sigma2 = sigma2;
        self
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            c: 0.1,
            horizon: 1.0,
            sigma0: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            m: 1.0,
            gamma0: 1.0,
            x_init: 1.0,
        }
    }
}

/// Validated parameters plus the discounted terminal weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    params: ModelParams,
    gamma: f64,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate().map_err(Error::InvalidParams)?;
        let gamma = params.gamma0 * (-params.c * params.horizon).exp();
        Ok(Self { params, gamma })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// `gamma0 * exp(-c T)`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn drift(&self, x: f64, u: f64) -> f64 {
        self.params.drift(x, u)
    }

    pub fn diffusion(&self, x: f64, u: f64) -> f64 {
        self.params.diffusion(x, u)
    }
}

/// Admissible control values `[0, upper]`, with `upper = None` for `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSet {
    pub upper: Option<f64>,
}

impl ControlSet {
    pub const fn bounded(m: f64) -> Self {
        Self { upper: Some(m) }
    }

    pub const fn unbounded() -> Self {
        Self { upper: None }
    }

    pub fn lower(&self) -> f64 {
        0.0
    }

    pub fn contains(&self, u: f64) -> bool {
        u.is_finite() && u >= 0.0 && self.upper.map_or(true, |m| u <= m)
    }
}

impl std::fmt::Display for ControlSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.upper {
            Some(m) => write!(f, "[0, {m}]"),
            None => f.write_str("[0, inf)"),
        }
    }
}

/// `∫_a^b e^{-c t} dt`, exact for `c = 0` as well.
pub fn discount_integral(c: f64, a: f64, b: f64) -> f64 {
    if c == 0.0 {
        b - a
    } else {
        // e^{-ca} (1 - e^{-c(b-a)}) / c without cancellation for small c(b-a)
        (-c * a).exp() * -(-c * (b - a)).exp_m1() / c
    }
}
