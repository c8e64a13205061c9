//! Scaled complementary error function.
//!
//! `erfcx(z) = exp(z²) erfc(z)` evaluated without forming either factor
//! separately for `z ≥ 0`:
//!
//! * `0 ≤ z < 2`: `exp(z²) - (2/√π) Σ 2ⁿ z^{2n+1} / (2n+1)!!`, a series of
//!   positive terms, so the only cancellation is the final subtraction
//!   (at most ~200x at `z = 2`).
//! * `z ≥ 2`: the Laplace continued fraction
//!   `1 / (√π (z + (1/2)/(z + 1/(z + (3/2)/(z + …)))))`, evaluated backward
//!   from a fixed depth.
//! * `z < 0`: reflection `erfcx(z) = 2 exp(z²) - erfcx(-z)`, which overflows
//!   once `z²` approaches `ln(f64::MAX)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Smallest argument accepted by [`erfcx`]; below it `exp(z²)` overflows.
pub const ERFCX_MIN_ARG: f64 = -26.5;

const SERIES_LIMIT: f64 = 2.0;
const CF_DEPTH: usize = 80;

pub fn erfcx(z: f64) -> Result<f64> {
    if z.is_nan() || z < ERFCX_MIN_ARG {
        return Err(Error::Overflow {
            z,
            lo: ERFCX_MIN_ARG,
        });
    }
    Ok(if z >= 0.0 {
        erfcx_nonneg(z)
    } else {
        2.0 * (z * z).exp() - erfcx_nonneg(-z)
    })
}

/// `1/(√π erfcx(z)) - z`, the excess of the inverse Mills-type ratio over
/// its leading asymptote. Positive for every `z`; evaluated from the tail of
/// the continued fraction for `z ≥ 2` so that no cancellation occurs.
pub fn erfcx_reciprocal_excess(z: f64) -> Result<f64> {
    if z.is_nan() || z < ERFCX_MIN_ARG {
        return Err(Error::Overflow {
            z,
            lo: ERFCX_MIN_ARG,
        });
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    if z < SERIES_LIMIT {
        return Ok(1.0 / (PI.sqrt() * erfcx(z)?) - z);
    }
    let mut f = z;
    for n in (2..=CF_DEPTH).rev() {
        f = z + 0.5 * n as f64 / f;
    }
    Ok(0.5 / f)
}

fn erfcx_nonneg(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else if z < SERIES_LIMIT {
        let z2 = z * z;
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        while term > 1e-17 * sum {
            n += 1.0;
            term *= 2.0 * z2 / (2.0 * n + 1.0);
            sum += term;
        }
        z2.exp() - 2.0 / PI.sqrt() * sum
    } else {
        let mut f = z;
        for n in (1..=CF_DEPTH).rev() {
            f = z + 0.5 * n as f64 / f;
        }
        1.0 / (PI.sqrt() * f)
    }
}
