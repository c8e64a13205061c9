//! Feedback rules `(t, x) -> u`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ControlSet;
use crate::stopping::StoppingSolution;

/// Time-dependent feedback coefficient `k(t)` of a linear policy `u = k(t) x`.
pub type GainFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Policy {
    Constant {
        u: f64,
        set: ControlSet,
    },
    /// `0` on `t <= t_star`, `m` afterwards.
    BangBang {
        t_star: f64,
        m: f64,
    },
    /// `u = max(k(t) x, 0)`, defined for `t` in `domain`.
    LinearFeedback {
        gain: GainFn,
        domain: (f64, f64),
    },
    /// Goodwill-gap feedback of the discretionary stopping problem; ignores `t`.
    StoppingFeedback(Arc<StoppingSolution>),
    Grid(GridTable),
}

impl Policy {
    pub fn evaluate(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            Policy::Constant { u, .. } => Ok(*u),
            Policy::BangBang { t_star, m } => Ok(if t <= *t_star { 0.0 } else { *m }),
            Policy::LinearFeedback { gain, domain } => {
                if t < domain.0 || t > domain.1 {
                    return Err(Error::OutOfDomain {
                        t,
                        lo: domain.0,
                        hi: domain.1,
                    });
                }
                Ok((gain(t)? * x).max(0.0))
            }
            Policy::StoppingFeedback(sol) => Ok(sol.control(x)),
            Policy::Grid(table) => Ok(table.evaluate(t, x)),
        }
    }

    pub fn control_set(&self) -> ControlSet {
        match self {
            Policy::Constant { set, .. } => *set,
            Policy::BangBang { m, .. } => ControlSet::bounded(*m),
            Policy::LinearFeedback { .. } | Policy::StoppingFeedback(_) => ControlSet::unbounded(),
            Policy::Grid(table) => table.set,
        }
    }

    /// Evaluates and checks membership in the declared control set.
    pub fn checked(&self, t: f64, x: f64) -> Result<f64> {
        let u = self.evaluate(t, x)?;
        let set = self.control_set();
        if set.contains(u) {
            Ok(u)
        } else {
            Err(Error::ControlOutOfSet {
                t,
                u,
                set: set.to_string(),
            })
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Constant { .. } => "constant",
            Policy::BangBang { .. } => "bang-bang",
            Policy::LinearFeedback { .. } => "linear-feedback",
            Policy::StoppingFeedback(_) => "stopping-feedback",
            Policy::Grid(_) => "grid-table",
        }
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Constant { u, set } => write!(f, "Constant({u} in {set})"),
            Policy::BangBang { t_star, m } => write!(f, "BangBang(t* = {t_star}, m = {m})"),
            Policy::LinearFeedback { domain, .. } => {
                write!(f, "LinearFeedback(t in [{}, {}])", domain.0, domain.1)
            }
            Policy::StoppingFeedback(sol) => write!(f, "StoppingFeedback(x0 = {})", sol.x0),
            Policy::Grid(table) => write!(
                f,
                "Grid({} times x {} states)",
                table.times.len(),
                table.states.len()
            ),
        }
    }
}

/// Tabulated policy: piecewise constant in time (right-continuous at the
/// breakpoints), linear in state, clamped outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    times: Vec<f64>,
    states: Vec<f64>,
    /// `values[i][j]` applies on `[times[i], times[i+1])` at `states[j]`.
    values: Vec<Vec<f64>>,
    set: ControlSet,
}

impl GridTable {
    pub fn new(
        times: Vec<f64>,
        states: Vec<f64>,
        values: Vec<Vec<f64>>,
        set: ControlSet,
    ) -> Result<Self> {
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if times.is_empty() || states.is_empty() || !sorted(&times) || !sorted(&states) {
            return Err(Error::Grid(
                "policy table axes must be non-empty and strictly increasing".into(),
            ));
        }
        if values.len() != times.len() || values.iter().any(|row| row.len() != states.len()) {
            return Err(Error::Grid("policy table shape mismatch".into()));
        }
        if let Some(&bad) = values.iter().flatten().find(|&&u| !set.contains(u)) {
            return Err(Error::ControlOutOfSet {
                t: f64::NAN,
                u: bad,
                set: set.to_string(),
            });
        }
        Ok(Self {
            times,
            states,
            values,
            set,
        })
    }

    /// Time-only table (the control ignores the state).
    pub fn open_loop(times: Vec<f64>, values: Vec<f64>, set: ControlSet) -> Result<Self> {
        let values = values.into_iter().map(|u| vec![u]).collect();
        Self::new(times, vec![0.0], values, set)
    }

    pub fn evaluate(&self, t: f64, x: f64) -> f64 {
        let i = self.times.partition_point(|&ti| ti <= t).saturating_sub(1);
        let row = &self.values[i];
        if self.states.len() == 1 {
            return row[0];
        }
        let j = self.states.partition_point(|&s| s <= x);
        if j == 0 {
            row[0]
        } else if j == self.states.len() {
            row[j - 1]
        } else {
            let (s0, s1) = (self.states[j - 1], self.states[j]);
            let w = (x - s0) / (s1 - s0);
            row[j - 1] * (1.0 - w) + row[j] * w
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bang_bang_switches_after_t_star() {
        let p = Policy::BangBang {
            t_star: 0.5,
            m: 2.0,
        };
        assert_eq!(p.evaluate(0.49, 1.0).unwrap(), 0.0);
        assert_eq!(p.evaluate(0.5, 1.0).unwrap(), 0.0);
        assert_eq!(p.evaluate(0.51, 1.0).unwrap(), 2.0);
        assert_eq!(p.control_set(), ControlSet::bounded(2.0));
    }

    #[test]
    fn linear_feedback_domain_and_sign() {
        let gain: GainFn = Arc::new(|t| Ok(1.0 + t));
        let p = Policy::LinearFeedback {
            gain,
            domain: (0.0, 1.0),
        };
        assert_eq!(p.evaluate(0.5, 2.0).unwrap(), 3.0);
        assert_eq!(p.evaluate(0.5, -2.0).unwrap(), 0.0);
        assert!(matches!(
            p.evaluate(1.5, 1.0),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn checked_rejects_out_of_set() {
        let p = Policy::Constant {
            u: 3.0,
            set: ControlSet::bounded(2.0),
        };
        assert!(matches!(
            p.checked(0.0, 0.0),
            Err(Error::ControlOutOfSet { .. })
        ));
    }

    #[test]
    fn grid_table_lookup() {
        let table = GridTable::new(
            vec![0.0, 0.5],
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0], vec![2.0, 4.0]],
            ControlSet::bounded(5.0),
        )
        .unwrap();
        assert_eq!(table.evaluate(0.1, 0.5), 0.5);
        assert_eq!(table.evaluate(0.5, 0.25), 2.5);
        assert_eq!(table.evaluate(0.9, 7.0), 4.0);
        assert_eq!(table.evaluate(-1.0, -1.0), 0.0);
    }

    #[test]
    fn grid_table_validates_shape_and_values() {
        assert!(
            GridTable::open_loop(vec![0.0, 0.0], vec![0.0, 0.0], ControlSet::bounded(1.0)).is_err()
        );
        assert!(GridTable::open_loop(vec![0.0], vec![2.0], ControlSet::bounded(1.0)).is_err());
        assert!(GridTable::new(
            vec![0.0],
            vec![0.0, 1.0],
            vec![vec![0.0]],
            ControlSet::unbounded()
        )
        .is_err());
    }
}
