//! Scaled coefficients of the reduced Riccati equation and the closed-form
//! well-posedness classification.
//!
//! With `σ2 > 0` and no discounting, `π(s) = 1 + σ2² P(T - s)` solves
//!
//! ```text
//! π' = a1 π + a2 + a3 / π,   π(0) = a4,   π > 0.
//! ```
//!
//! The quadratic `a1 π² + a2 π + a3` always has the root `1`; the other root
//! is `w² / (2ρ - σ1² + w²)` with `w = σ1 + 1/σ2`. On the phase line `π`
//! reaches zero in finite time exactly when `a4` lies below the smaller root.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub zeta: f64,
    /// Roots of `a1 π² + a2 π + a3`, ascending; `None` when `zeta < 0`.
    pub xi_small: Option<f64>,
    pub xi_large: Option<f64>,
}

pub fn riccati_coeffs(p: &ModelParams) -> Result<RiccatiCoeffs> {
    if !(p.sigma2 > 0.0) {
        return Err(Error::Precondition(
            "sigma2 > 0 required for the scaled coefficients; use the closed form for sigma2 = 0"
                .into(),
        ));
    }
    let a4 = 1.0 - p.gamma0 * p.sigma2 * p.sigma2;
    if !(a4 > 0.0) {
        return Err(Error::Precondition(format!(
            "1 − gamma0·sigma2^2 > 0 required (got {a4})"
        )));
    }
    // Evaluated in double-double: zeta = a2² - 4 a1 a3 cancels down to
    // (2ρ - σ1²)², which is tiny next to a2² when σ2 is small.
    let rho = Dd::from(p.rho);
    let s1 = Dd::from(p.sigma1);
    let inv = Dd::recip(p.sigma2);
    let a1 = -(rho * 2.0 + s1 * inv * 2.0 + inv * inv);
    let a2 = rho * 2.0 + s1 * s1 + inv * inv * 2.0 + s1 * inv * 4.0;
    let a3 = -((s1 + inv) * (s1 + inv));
    let zeta = (a2 * a2 - a1 * a3 * 4.0).hi;
    let (a1, a2, a3) = (a1.hi, a2.hi, a3.hi);
    let (xi_small, xi_large) = if zeta >= 0.0 {
        // larger-magnitude root first, the other from the product a3/a1
        let q = -0.5 * (a2 + zeta.sqrt());
        let r1 = q / a1;
        let r2 = a3 / q;
        (Some(r1.min(r2)), Some(r1.max(r2)))
    } else {
        (None, None)
    };
    Ok(RiccatiCoeffs {
        a1,
        a2,
        a3,
        a4,
        zeta,
        xi_small,
        xi_large,
    })
}

impl RiccatiCoeffs {
    /// Right side of the reduced equation.
    pub fn reduced_rhs(&self, pi: f64) -> f64 {
        self.a1 * pi + self.a2 + self.a3 / pi
    }

    /// Whether `zeta` is zero up to rounding in its own evaluation.
    pub fn zeta_is_zero(&self) -> bool {
        self.zeta.abs() <= 1e-24 * self.a2 * self.a2
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn recip(x: f64) -> Self {
        let q = 1.0 / x;
        let r = (-q).mul_add(x, 1.0);
        Dd::renorm(q, r / x)
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::renorm(s.hi, s.lo + t.hi);
        Dd::renorm(u.hi, u.lo + t.lo)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl std::ops::Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, k: f64) -> Dd {
        self * Dd::from(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    II,
    #[serde(rename = "iii")]
    III,
    #[serde(rename = "iv")]
    IV,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "degenerate-sigma2")]
    DegenerateSigma2,
}

impl CaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseLabel::I => "i",
            CaseLabel::II => "ii",
            CaseLabel::III => "iii",
            CaseLabel::IV => "iv",
            CaseLabel::V => "v",
            CaseLabel::DegenerateSigma2 => "degenerate-sigma2",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Advisory well-posedness verdicts from closed-form conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    /// Case selected by the literal textbook conditions.
    pub case_label: CaseLabel,
    /// Verdict of the literal conditions, including their horizon bounds.
    pub literal_well_posed: bool,
    /// Horizon bound attached to the literal case, if any.
    pub literal_t_max: Option<f64>,
    /// Phase-line verdict for the reduced equation at horizon `T`.
    pub well_posed_closed_form: bool,
    /// Time for `π` to reach zero; `None` if it never does.
    pub t_max: Option<f64>,
    /// The negative-`zeta` case cannot occur because `zeta = (2ρ - σ1²)²`.
    pub case_v_reachable: bool,
}

impl Classification {
    pub fn agrees(&self) -> bool {
        self.literal_well_posed == self.well_posed_closed_form
    }
}

/// Time for the reduced equation to drive `π` from `a4` to zero.
pub fn reduced_blowup_time(c: &RiccatiCoeffs) -> Option<f64> {
    if c.zeta_is_zero() {
        let xi = -c.a2 / (2.0 * c.a1);
        if c.a4 >= xi {
            return None;
        }
        return Some(zero_zeta_bound(c));
    }
    let (xs, xl) = (c.xi_small?, c.xi_large?);
    if c.a4 >= xs {
        return None;
    }
    Some(two_root_bound(c, xs, xl))
}

/// `ζ^{-1/2} (ξ1 ln(ξ1/(ξ1 - a4)) - ξ2 ln(ξ2/(ξ2 - a4)))` with `ξ1 < ξ2`.
fn two_root_bound(c: &RiccatiCoeffs, xs: f64, xl: f64) -> f64 {
    (xs * (xs / (xs - c.a4)).ln() - xl * (xl / (xl - c.a4)).ln()) / c.zeta.sqrt()
}

fn zero_zeta_bound(c: &RiccatiCoeffs) -> f64 {
    let d = 2.0 * c.a1 * c.a4 + c.a2;
    ((c.a2 / d).ln() + 2.0 * c.a1 * c.a4 / d) / c.a1
}

/// Bound of the negative-`zeta` case, with `|ζ|^{1/2}` in place of `ζ^{1/2}`.
pub fn negative_zeta_bound(c: &RiccatiCoeffs) -> f64 {
    let s = 1.0 / (-c.zeta).sqrt();
    let log = (c.a3 / (c.a1 * c.a4 * c.a4 + c.a2 * c.a4 + c.a3)).ln();
    let atan = (c.a2 * s).atan() - (s * (2.0 * c.a1 * c.a4 + c.a2)).atan();
    (log - 2.0 * c.a2 * s * atan) / (2.0 * c.a1)
}

pub fn classify_wellposedness(c: &RiccatiCoeffs, horizon: f64) -> Classification {
    let root_zeta = c.zeta.max(0.0).sqrt();
    let (case_label, literal_t_max) = if c.zeta_is_zero() {
        if c.a2 > 2.0 * c.a1.abs() * c.a4 {
            (CaseLabel::III, None)
        } else {
            (CaseLabel::IV, Some(zero_zeta_bound(c)))
        }
    } else if c.zeta > 0.0 {
        if c.a2 > (2.0 * c.a1.abs() * c.a4 - root_zeta).max(0.0) {
            (CaseLabel::I, None)
        } else {
            let (xs, xl) = (c.xi_small.unwrap(), c.xi_large.unwrap());
            (CaseLabel::II, Some(two_root_bound(c, xs, xl)))
        }
    } else {
        (CaseLabel::V, Some(negative_zeta_bound(c)))
    };
    let literal_well_posed = literal_t_max.map_or(true, |t| horizon <= t);
    let t_max = reduced_blowup_time(c);
    Classification {
        case_label,
        literal_well_posed,
        literal_t_max,
        well_posed_closed_form: t_max.map_or(true, |t| horizon <= t),
        t_max,
        case_v_reachable: false,
    }
}
