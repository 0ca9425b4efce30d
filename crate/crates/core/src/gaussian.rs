//! Gaussian density, correlated pairs, the kernel G and the bivariate CDF.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::special::{norm_cdf, TWO_PI};

/// Correlation parameter, strictly inside (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho.abs() < 1.0 {
            Ok(Self(rho))
        } else {
            Err(Error::InvalidCorrelation(rho))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// sqrt(1 - rho^2)
    pub fn sigma(self) -> f64 {
        (1.0 - self.0 * self.0).sqrt()
    }

    pub fn nonzero(self) -> Result<Self> {
        if self.0 == 0.0 {
            Err(Error::ZeroCorrelation)
        } else {
            Ok(self)
        }
    }

    pub fn negated(self) -> Self {
        Self(-self.0)
    }

    /// Finite-difference step in rho: max(1e-4, 1e-3 (1 - |rho|)).
    pub fn fd_step(self) -> f64 {
        (1e-3 * (1.0 - self.0.abs())).max(1e-4)
    }

    /// The pair rho - h, rho + h, rejecting steps that leave (-1, 1).
    pub fn stencil(self, h: f64) -> Result<(Self, Self)> {
        let lo = Self::new(self.0 - h).map_err(|_| Error::StepOutOfRange { rho: self.0, step: h })?;
        let hi = Self::new(self.0 + h).map_err(|_| Error::StepOutOfRange { rho: self.0, step: h })?;
        Ok((lo, hi))
    }
}

impl TryFrom<f64> for Correlation {
    type Error = Error;
    fn try_from(rho: f64) -> Result<Self> {
        Self::new(rho)
    }
}

impl From<Correlation> for f64 {
    fn from(c: Correlation) -> f64 {
        c.0
    }
}

/// A point of R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GaussianVector(Vec<f64>);

impl GaussianVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if coords.iter().all(|c| c.is_finite()) {
            Ok(Self(coords))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for GaussianVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GaussianVector> for Vec<f64> {
    fn from(v: GaussianVector) -> Vec<f64> {
        v.0
    }
}

impl AsRef<[f64]> for GaussianVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() == d {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: d, found: x.len() })
    }
}

/// Standard Gaussian density on R^k, without dimension checks.
pub fn density(x: &[f64]) -> f64 {
    (TWO_PI).powf(-0.5 * x.len() as f64) * (-0.5 * norm_sq(x)).exp()
}

/// gamma_k(x) = (2 pi)^(-k/2) exp(-|x|^2 / 2)
pub fn gaussian_density(x: &GaussianVector, k: usize) -> Result<f64> {
    check_dim(x.coords(), k)?;
    Ok(density(x.coords()))
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Draws X standard normal and Y = rho X + sqrt(1 - rho^2) Z.
pub fn sample_correlated_pair<R: Rng + ?Sized>(
    rho: Correlation,
    d: usize,
    rng: &mut R,
) -> (GaussianVector, GaussianVector) {
    let d = d.max(1);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    fill_correlated_pair(rho, rng, &mut x, &mut y);
    (GaussianVector(x), GaussianVector(y))
}

pub(crate) fn fill_correlated_pair<R: Rng + ?Sized>(rho: Correlation, rng: &mut R, x: &mut [f64], y: &mut [f64]) {
    let (r, s) = (rho.value(), rho.sigma());
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        *xi = a;
        *yi = r * a + s * b;
    }
}

/// The Mehler kernel G(x, y) with G(x, y) dy = gamma(x) (law of Y given X = x) dy.
pub fn kernel_g(x: &GaussianVector, y: &GaussianVector, rho: Correlation) -> Result<f64> {
    check_dim(y.coords(), x.dim())?;
    Ok(kernel_g_raw(x.coords(), y.coords(), rho.value()))
}

pub(crate) fn kernel_g_raw(x: &[f64], y: &[f64], rho: f64) -> f64 {
    let d = x.len() as f64;
    let one = 1.0 - rho * rho;
    let e = (-norm_sq(x) - norm_sq(y) + 2.0 * rho * dot(x, y)) / (2.0 * one);
    one.powf(-0.5 * d) * (2.0 * PI).powf(-d) * e.exp()
}

/// P(X <= a, Y <= b) for standard normals with correlation rho, from
/// Phi(a) Phi(b) + (1/2pi) int_0^{asin rho} exp(-(a^2 - 2ab sin t + b^2) / (2 cos^2 t)) dt.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: Correlation) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return norm_cdf(b);
    }
    if b == f64::INFINITY {
        return norm_cdf(a);
    }
    let r = rho.value();
    let base = norm_cdf(a) * norm_cdf(b);
    if r == 0.0 {
        return base;
    }
    let top = r.asin();
    let g = |t: f64| {
        let (s, c) = t.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(a * a - 2.0 * a * b * s + b * b) / (2.0 * c2)).exp()
    };
    let (lo, hi) = if top > 0.0 { (0.0, top) } else { (top, 0.0) };
    let pts: Vec<f64> = (0..=8).map(|k| lo + (hi - lo) * k as f64 / 8.0).collect();
    let (v, _) = integrate(g, &pts, 1e-14);
    let v = if top > 0.0 { v } else { -v };
    (base + v / TWO_PI).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;

    #[test]
    fn correlation_bounds() {
        assert!(Correlation::new(1.0).is_err());
        assert!(Correlation::new(-1.0).is_err());
        assert!(Correlation::new(f64::NAN).is_err());
        assert_eq!(Correlation::new(0.0).unwrap().nonzero(), Err(Error::ZeroCorrelation));
        assert!(Correlation::new(0.9999).unwrap().stencil(1e-3).is_err());
    }

    #[test]
    fn density_values() {
        let z1 = GaussianVector::zeros(1);
        assert!((gaussian_density(&z1, 1).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let z2 = GaussianVector::zeros(2);
        assert!((gaussian_density(&z2, 2).unwrap() - 0.159_154_943_091_895_34).abs() < 1e-15);
        let x = GaussianVector::new(vec![1.0, 0.0]).unwrap();
        let direct = (-0.5f64).exp() / (2.0 * PI);
        assert!((gaussian_density(&x, 2).unwrap() - direct).abs() < 1e-16);
        assert!((direct - 0.096_532).abs() < 1e-6);
        assert!(gaussian_density(&x, 3).is_err());
    }

    #[test]
    fn kernel_three_forms_agree() {
        let rho = Correlation::new(0.5).unwrap();
        let x = GaussianVector::new(vec![1.0]).unwrap();
        let g = kernel_g(&x, &x, rho).unwrap();
        let r = 0.5f64;
        let one = 1.0 - r * r;
        let g1 = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let second = one.powf(-0.5) * g1(1.0) * g1(1.0) * ((-r * r * 2.0 + 2.0 * r) / (2.0 * one)).exp();
        let third = g1(1.0) * (2.0 * PI * one).powf(-0.5) * (-(1.0 - r).powi(2) / (2.0 * one)).exp();
        assert!((g - second).abs() < 1e-15);
        assert!((g - third).abs() < 1e-15);
        let z = GaussianVector::zeros(1);
        let g0 = kernel_g(&z, &z, Correlation::new(0.0).unwrap()).unwrap();
        assert!((g0 - 1.0 / (2.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn bivariate_reference_values() {
        let c = |r: f64| Correlation::new(r).unwrap();
        assert!((bivariate_normal_cdf(0.0, 0.0, c(0.0)) - 0.25).abs() < 1e-15);
        assert!((bivariate_normal_cdf(0.0, 0.0, c(0.5)) - 1.0 / 3.0).abs() < 1e-13);
        assert!((bivariate_normal_cdf(40.0, 0.0, c(0.3)) - 0.5).abs() < 1e-15);
        assert!((bivariate_normal_cdf(0.0, 0.0, c(-0.5)) - (0.25 - 1.0 / 12.0)).abs() < 1e-13);
        // Owen's closed form at a = b = 0 for a range of correlations.
        for r in [-0.95, -0.3, 0.1, 0.7, 0.99] {
            let v = bivariate_normal_cdf(0.0, 0.0, c(r));
            assert!((v - (0.25 + r.asin() / TWO_PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn pairs_are_reproducible() {
        let rho = Correlation::new(0.7).unwrap();
        let a = sample_correlated_pair(rho, 3, &mut stream_rng(11, 0));
        let b = sample_correlated_pair(rho, 3, &mut stream_rng(11, 0));
        assert_eq!(a, b);
    }
}
