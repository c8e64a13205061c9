use std::fmt;

use thiserror::Error;

/// A single violated parameter constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub constraint: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

/// Every violated constraint found while validating a parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn contains(&self, constraint: &str) -> bool {
        self.0.iter().any(|v| v.constraint == constraint)
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(Violations),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("infeasible budget: M = {budget} exceeds the full-horizon spend {bound}")]
    InfeasibleBudget { budget: f64, bound: f64 },

    #[error("degenerate budget: M must be positive, got {0}")]
    DegenerateBudget(f64),

    #[error("control {u} at t = {t} is outside the control set {set}")]
    ControlOutOfSet { t: f64, u: f64, set: String },

    #[error("time {t} is outside the policy domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("argument {z} is outside the stable range [{lo}, +inf)")]
    Overflow { z: f64, lo: f64 },

    #[error("no sign change of the free-boundary equation on [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("explicit scheme unstable: {substeps} substeps needed per time step (limit {limit}), CFL ratio {ratio:.3}")]
    Instability {
        ratio: f64,
        substeps: usize,
        limit: usize,
    },

    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("problem is not well posed: Riccati solution breaks down at t = {t_blow}")]
    NotWellPosed { t_blow: f64 },

    #[error("malformed grid: {0}")]
    Grid(String),

    #[error("Monte Carlo run needs at least one path")]
    NoPaths,
}

pub type Result<T> = std::result::Result<T, Error>;
