//! Standard normal density, distribution and quantile.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Density of N(0, s^2) at x.
pub fn norm_pdf_scaled(x: f64, s: f64) -> f64 {
    norm_pdf(x / s) / s
}

pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Phi(x), accurate for large x.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// P(lo < Z < hi) without cancellation in either tail.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.0
    } else if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    }
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `x * exp(-x^2/2)` with the convention that it vanishes at infinity.
pub(crate) fn x_exp(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * (-0.5 * x * x).exp()
    }
}

pub(crate) fn half_exp(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp()
    }
}

pub(crate) const TWO_PI: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_sf(8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.8413, 0.999] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-14 * p.max(1e-3) * 1e3);
        }
    }

    #[test]
    fn interval_is_symmetric() {
        assert!((norm_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        assert!((norm_interval(7.0, 9.0) - norm_interval(-9.0, -7.0)).abs() < 1e-25);
    }
}
