//! The Ornstein–Uhlenbeck operator `T_rho f(x) = E f(rho x + sigma Z)` and
//! its derivatives in `x` and in `rho`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{dot, standard_normal, Correlation, GaussianVector};
use crate::mc::{sample_mean, sample_means};
use crate::partitions::SetSpec;
use crate::planar::{Planar, QUADRATURE_BOUND, RADIUS};
use crate::quadrature::{gauss_hermite, gaussian_breaks, integrate};
use crate::special::norm_pdf;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Functions `T_rho` can be applied to, tagged by the structure the
/// evaluator can exploit.
#[derive(Clone)]
pub enum Integrand {
    Indicator(SetSpec),
    /// `x_k`.
    Coordinate(usize),
    /// `x_k^2 - 1`.
    HermiteSquare(usize),
    /// `g(x_k)` for a bounded `g`.
    OneDim { axis: usize, g: ScalarFn },
    /// Any bounded function of the whole vector; always Monte Carlo.
    General(FieldFn),
}

fn axis_in(axis: usize, d: usize) -> Result<()> {
    if axis < d {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index: axis, cells: d })
    }
}

fn set_dim(s: &SetSpec, d: usize) -> Result<()> {
    s.validate(d)
}

fn mc_point<F: Fn(&[f64]) -> f64 + Sync>(x: &[f64], rho: Correlation, budget: &Budget, f: F) -> Result<Estimate> {
    let n = budget.require_samples()?;
    let (r, s) = (rho.value(), rho.sigma());
    Ok(sample_mean(n, budget.seed, |rng| {
        let mut y = vec![0.0; x.len()];
        standard_normal(rng, &mut y);
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = r * xi + s * *yi);
        f(&y)
    }))
}

/// `T_rho f(x)`. Polynomials use Gauss–Hermite, one-dimensional functions
/// adaptive quadrature, polyhedral indicators with at most two normal
/// directions the planar engine; everything else Monte Carlo.
pub fn ou_apply(f: &Integrand, rho: Correlation, x: &GaussianVector, budget: &Budget) -> Result<Estimate> {
    let xs = x.coords();
    let d = xs.len();
    let (r, s) = (rho.value(), rho.sigma());
    let deterministic = budget.mode != Mode::MonteCarlo;
    match f {
        Integrand::Coordinate(k) | Integrand::HermiteSquare(k) => {
            axis_in(*k, d)?;
            let square = matches!(f, Integrand::HermiteSquare(_));
            let g = move |t: f64| if square { t * t - 1.0 } else { t };
            if deterministic {
                let (nodes, weights) = gauss_hermite(8);
                let v: f64 = nodes.iter().zip(&weights).map(|(z, w)| w * g(r * xs[*k] + s * z)).sum();
                return Ok(Estimate::quadrature(v, 1e-14 * (1.0 + xs[*k] * xs[*k])));
            }
            mc_point(xs, rho, budget, |y| g(y[*k]))
        }
        Integrand::OneDim { axis, g } => {
            axis_in(*axis, d)?;
            if deterministic {
                let c = r * xs[*axis];
                let pts = gaussian_breaks(-RADIUS, RADIUS, 0.0, 1.0, RADIUS);
                let (v, e) = integrate(|z| norm_pdf(z) * g(c + s * z), &pts, 1e-13);
                return Ok(Estimate::quadrature(v, e.max(1e-13)));
            }
            mc_point(xs, rho, budget, |y| g(y[*axis]))
        }
        Integrand::Indicator(set) => {
            set_dim(set, d)?;
            if deterministic {
                if let SetSpec::HalfSpace(h) = set {
                    let v = crate::special::norm_cdf((h.offset - r * dot(&h.normal, xs)) / s);
                    return Ok(Estimate::closed_form(v));
                }
                if let Some(pl) = Planar::of_set(set, d) {
                    return Ok(Estimate::quadrature(pl.t_cell(0, xs, r), QUADRATURE_BOUND));
                }
                if budget.mode == Mode::Quadrature {
                    return Err(Error::Unsupported("no quadrature rule for this set".into()));
                }
            }
            mc_point(xs, rho, budget, |y| f64::from(u8::from(set.contains(y))))
        }
        Integrand::General(g) => {
            if budget.mode == Mode::Quadrature {
                return Err(Error::Unsupported("general integrands need Monte Carlo".into()));
            }
            mc_point(xs, rho, budget, |y| g(y))
        }
    }
}

/// `grad T_rho 1_set(x) = (rho / sigma) E[Z 1{rho x + sigma Z in set}]`,
/// the moment form rather than a difference quotient.
pub fn ou_gradient(set: &SetSpec, rho: Correlation, x: &GaussianVector, budget: &Budget) -> Result<Vec<Estimate>> {
    let rho = rho.nonzero()?;
    let xs = x.coords();
    let d = xs.len();
    set_dim(set, d)?;
    let (r, s) = (rho.value(), rho.sigma());
    if budget.mode != Mode::MonteCarlo {
        if let Some(pl) = Planar::of_set(set, d) {
            return Ok(pl.grad(0, xs, r).into_iter().map(|g| Estimate::quadrature(g, QUADRATURE_BOUND)).collect());
        }
        if budget.mode == Mode::Quadrature {
            return Err(Error::Unsupported("no quadrature rule for this set".into()));
        }
    }
    let n = budget.require_samples()?;
    let est = sample_means(n, budget.seed, d, |rng, out| {
        let mut z = vec![0.0; d];
        standard_normal(rng, &mut z);
        let y: Vec<f64> = xs.iter().zip(&z).map(|(xi, zi)| r * xi + s * zi).collect();
        let hit = f64::from(u8::from(set.contains(&y)));
        out.iter_mut().zip(&z).for_each(|(o, zi)| *o = hit * zi);
    });
    Ok(est.into_iter().map(|e| e.scale(r / s)).collect())
}

/// `d/d rho T_rho 1_set(x)` computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoDerivative {
    /// Central difference of `ou_apply` in `rho` with common random numbers.
    pub finite_difference: Estimate,
    /// `(-Delta T + <x, grad T>) / rho` with both terms in moment form.
    pub heat_identity: Estimate,
}

pub fn ou_rho_derivative(set: &SetSpec, rho: Correlation, x: &GaussianVector, budget: &Budget) -> Result<RhoDerivative> {
    let rho = rho.nonzero()?;
    let xs = x.coords();
    let d = xs.len();
    set_dim(set, d)?;
    let h = rho.fd_step();
    let (lo, hi) = rho.stencil(h)?;
    let f = Integrand::Indicator(set.clone());
    let up = ou_apply(&f, hi, x, budget)?;
    let down = ou_apply(&f, lo, x, budget)?;
    let finite_difference = up.sub(&down).scale(0.5 / h);

    let (r, s) = (rho.value(), rho.sigma());
    if budget.mode != Mode::MonteCarlo {
        if let Some(pl) = Planar::of_set(set, d) {
            let heat_identity = Estimate::quadrature(pl.rho_derivative(0, xs, r), QUADRATURE_BOUND / (s * s * r.abs()));
            return Ok(RhoDerivative { finite_difference, heat_identity });
        }
        if budget.mode == Mode::Quadrature {
            return Err(Error::Unsupported("no quadrature rule for this set".into()));
        }
    }
    // Single estimator of (rho/sigma) <x, Z> 1 - (rho^2/sigma^2)(|Z|^2 - d) 1, divided by rho.
    let n = budget.require_samples()?;
    let heat_identity = sample_mean(n, budget.seed ^ 0x9e37_79b9, |rng| {
        let mut z = vec![0.0; d];
        standard_normal(rng, &mut z);
        let y: Vec<f64> = xs.iter().zip(&z).map(|(xi, zi)| r * xi + s * zi).collect();
        if !set.contains(&y) {
            return 0.0;
        }
        let zz: f64 = z.iter().map(|v| v * v).sum();
        (r / s * dot(xs, &z) - r * r / (s * s) * (zz - d as f64)) / r
    });
    Ok(RhoDerivative { finite_difference, heat_identity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::HalfSpace;

    fn rho(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    fn gv(x: &[f64]) -> GaussianVector {
        GaussianVector::new(x.to_vec()).unwrap()
    }

    fn half(a: f64, d: usize) -> SetSpec {
        let mut n = vec![0.0; d];
        n[0] = 1.0;
        SetSpec::HalfSpace(HalfSpace::new(n, a).unwrap())
    }

    #[test]
    fn polynomial_eigenfunctions() {
        let b = Budget::quadrature();
        let x = gv(&[0.7, -1.3]);
        for r in [-0.4, 0.3, 0.9] {
            let c = ou_apply(&Integrand::Coordinate(1), rho(r), &x, &b).unwrap();
            assert!((c.value - r * -1.3).abs() < 1e-14);
            let h = ou_apply(&Integrand::HermiteSquare(0), rho(r), &x, &b).unwrap();
            assert!((h.value - r * r * (0.49 - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn half_space_at_origin_is_one_half() {
        let x = gv(&[0.0, 0.0, 0.0]);
        let e = ou_apply(&Integrand::Indicator(half(0.0, 3)), rho(0.8), &x, &Budget::auto(0, 1)).unwrap();
        assert_eq!(e.value, 0.5);
        let m = ou_apply(&Integrand::Indicator(half(0.0, 3)), rho(0.8), &x, &Budget::monte_carlo(100_000, 1)).unwrap();
        assert!(m.agrees_with(0.5, 4.0));
    }

    #[test]
    fn gradient_of_half_space() {
        let x = gv(&[0.0, 0.0]);
        let g = ou_gradient(&half(0.0, 2), rho(0.6), &x, &Budget::quadrature()).unwrap();
        assert!((g[0].value + 0.299_206_710_301_074_5).abs() < 1e-12, "{}", g[0].value);
        assert!(g[1].value.abs() < 1e-15);
        let m = ou_gradient(&half(0.0, 2), rho(0.6), &x, &Budget::monte_carlo(400_000, 2)).unwrap();
        assert!(m[0].agrees_with(-0.299_206_710_301_074_5, 4.0));
        assert!(ou_gradient(&half(0.0, 2), rho(0.0), &x, &Budget::quadrature()).is_err());
    }

    #[test]
    fn rho_derivative_agrees_both_ways() {
        // T_rho 1{x_1 <= 1}(1, 0) = Phi(sqrt((1 - rho) / (1 + rho))).
        let x = gv(&[1.0, 0.0]);
        let r: f64 = 0.5;
        let u = ((1.0 - r) / (1.0 + r)).sqrt();
        let du = -1.0 / ((1.0 + r) * (1.0 + r) * u);
        let exact = norm_pdf(u) * du;
        let q = ou_rho_derivative(&half(1.0, 2), rho(r), &x, &Budget::quadrature()).unwrap();
        assert!((q.heat_identity.value - exact).abs() < 1e-10);
        assert!((q.finite_difference.value - exact).abs() < 1e-6);
        let m = ou_rho_derivative(&half(1.0, 2), rho(r), &x, &Budget::monte_carlo(1_000_000, 3)).unwrap();
        assert!(m.heat_identity.agrees_with(exact, 4.0));
        assert!(m.finite_difference.agrees_with(exact, 4.0));
    }
}
