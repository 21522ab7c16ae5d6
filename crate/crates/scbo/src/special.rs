//! Standard-normal CDF, density, and quantile function.
//!
//! The acquisition rules and the Gaussian copula need Φ, φ, and Φ⁻¹ to well
//! below 1e-9. Everything here is dependency-free and deterministic: erfc is
//! computed by a power series for small arguments and a Lentz continued
//! fraction in the tail, and the quantile is polished with Newton steps
//! against that erfc.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_2PI: f64 = 2.506628274631000502415765284811;
const TWO_OVER_SQRT_PI: f64 = 1.128379167095512573896158903122;

/// Complementary error function, accurate to ~1e-15 relative over the
/// range used here.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

// Maclaurin series for erf; cancellation stays below one digit for x <= 2.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0usize;
    loop {
        n += 1;
        term *= -x2 / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs() + 1e-300 || n > 200 {
            break;
        }
    }
    TWO_OVER_SQRT_PI * sum
}

// erfc(x) = exp(-x^2)/(x sqrt(pi)) * K where K is the continued fraction
// 1/(1+ (1/2x^2)/(1+ (2/2x^2)/(1+ ...))), evaluated by modified Lentz.
fn erfc_cf(x: f64) -> f64 {
    if x > 27.0 {
        // exp(-x^2) underflows past here.
        return 0.0;
    }
    let half_inv_x2 = 0.5 / (x * x);
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    let mut k = 0u32;
    loop {
        let (a, b) = if k == 0 {
            (1.0, 1.0)
        } else {
            (k as f64 * half_inv_x2, 1.0)
        };
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        k += 1;
        if (delta - 1.0).abs() < 1e-16 || k > 300 {
            break;
        }
    }
    (-x * x).exp() / (x * PI.sqrt()) * f
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1).
///
/// Panics on p outside the open interval; the copula always queries interior
/// plotting positions.
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_norm_cdf requires p in (0,1), got {p}");
    if p == 0.5 {
        return 0.0;
    }
    // Exploit symmetry so Newton always runs on the lower tail, where
    // Phi is computed from erfc with full relative accuracy.
    if p > 0.5 {
        return -inv_norm_cdf(1.0 - p);
    }
    // Abramowitz & Stegun 26.2.23 starting guess (|error| < 4.5e-4).
    let t = (-2.0 * p.ln()).sqrt();
    let mut x = -(t - (2.515517 + t * (0.802853 + t * 0.010328))
        / (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))));
    for _ in 0..20 {
        let err = norm_cdf(x) - p;
        let step = err / norm_pdf(x);
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}
