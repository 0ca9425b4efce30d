//! First and second variations of Gaussian noise stability under flows
//! that deform the cells of a partition.
//!
//! Two evaluation paths share one interface. Partitions whose facet
//! normals span at most two directions go through the planar engine, where
//! every surface integral is a one-dimensional adaptive quadrature along a
//! facet (times Gauss–Hermite in the orthogonal directions when the
//! integrand needs it). Other partitions fall back to Gaussian boundary
//! samples and Monte Carlo values of `T_rho`.


mod bilinear;
mod eigen;
mod second;


pub use bilinear::{bilinear_variation_suite, BilinearReport, SignRecord};
pub use second::{
    g_form, gradient_term, hyperstability_probe, second_variation_exact, second_variation_general,
    second_variation_translation, Hyperstability, FLOW_STEP,
};
pub use eigen::{dilation_eigen_residual, translation_eigen_residual, ResidualRecord, ResidualReport};

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{density, dot, norm, standard_normal, Correlation};
use crate::mc::sample_mean;
use crate::partitions::{boundary_sample, boundary_sample_detailed, BoundaryPoint, PartitionSpec, SampledBoundary, Transform};
use crate::planar::{facet_gamma_integral, facet_kernel_integral, Facet, Planar, QUADRATURE_BOUND};

pub type NormalScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A deformation of the cells, evaluated on an interface as
/// `f_ij(x) = <X(x), N_ij(x)>`.
#[derive(Clone)]
pub enum BoundaryField {
    Translation(Vec<f64>),
    /// `X(x) = x`.
    Dilation,
    /// `X(x) = x_d x` with `x_d` the last coordinate.
    DilationWeighted,
    /// A scalar given directly on the boundary as `f(location, N_ij)`.
    NormalScalar(NormalScalarFn),
}

impl std::fmt::Debug for BoundaryField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryField::Translation(v) => f.debug_tuple("Translation").field(v).finish(),
            BoundaryField::Dilation => f.write_str("Dilation"),
            BoundaryField::DilationWeighted => f.write_str("DilationWeighted"),
            BoundaryField::NormalScalar(_) => f.write_str("NormalScalar(..)"),
        }
    }
}

impl BoundaryField {
    pub fn normal_scalar<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        BoundaryField::NormalScalar(Arc::new(f))
    }

    /// `X(x)`, or `None` for a field known only through its normal part.
    pub fn vector(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            BoundaryField::Translation(v) => Some(v.clone()),
            BoundaryField::Dilation => Some(x.to_vec()),
            BoundaryField::DilationWeighted => {
                let xd = x[x.len() - 1];
                Some(x.iter().map(|v| xd * v).collect())
            }
            BoundaryField::NormalScalar(_) => None,
        }
    }

    /// `div X(x)`.
    pub fn divergence(&self, x: &[f64]) -> Option<f64> {
        let d = x.len() as f64;
        match self {
            BoundaryField::Translation(_) => Some(0.0),
            BoundaryField::Dilation => Some(d),
            BoundaryField::DilationWeighted => Some((d + 1.0) * x[x.len() - 1]),
            BoundaryField::NormalScalar(_) => None,
        }
    }

    pub fn normal_part(&self, x: &[f64], normal: &[f64]) -> f64 {
        match self {
            BoundaryField::Translation(v) => dot(v, normal),
            BoundaryField::Dilation => dot(x, normal),
            BoundaryField::DilationWeighted => x[x.len() - 1] * dot(x, normal),
            BoundaryField::NormalScalar(f) => f(x, normal),
        }
    }

    /// The flow of the field as a partition transform, where one exists.
    pub fn flow(&self, s: f64) -> Option<Transform> {
        match self {
            BoundaryField::Translation(v) => Some(Transform::Translate(v.iter().map(|c| s * c).collect())),
            BoundaryField::Dilation => Some(Transform::Dilate(s)),
            BoundaryField::DilationWeighted => Some(Transform::DilationWeighted(s)),
            BoundaryField::NormalScalar(_) => None,
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            BoundaryField::Translation(v) if v.len() != d => Err(Error::DimensionMismatch { expected: d, found: v.len() }),
            _ => Ok(()),
        }
    }

    /// Whether `f` on a facet varies along directions orthogonal to the
    /// engine's plane.
    fn needs_orth(&self, pl: &Planar) -> bool {
        if pl.frame.orth_dim() == 0 {
            return false;
        }
        match self {
            BoundaryField::Translation(_) | BoundaryField::Dilation => false,
            BoundaryField::DilationWeighted => {
                let mut e = vec![0.0; pl.frame.dim()];
                e[pl.frame.dim() - 1] = 1.0;
                norm(&pl.frame.orth_coords(&e)) > 1e-12
            }
            BoundaryField::NormalScalar(_) => true,
        }
    }

    /// `f` on a facet when it is constant there.
    fn facet_constant(&self, pl: &Planar, f: &Facet) -> Option<f64> {
        match self {
            BoundaryField::Translation(v) => Some(dot(v, &pl.frame.lift_dir(f.a))),
            BoundaryField::Dilation => Some(f.t),
            _ => None,
        }
    }
}

fn interface_pair(p: &PartitionSpec, i: usize, j: usize) -> Result<(usize, usize)> {
    p.check_index(i)?;
    p.check_index(j)?;
    if i == j {
        return Err(Error::EmptyInterface(i, j));
    }
    Ok((i.min(j), i.max(j)))
}

/// Facet normal in R^d.
pub(crate) fn facet_normal(pl: &Planar, f: &Facet) -> Vec<f64> {
    pl.frame.lift_dir(f.a)
}

/// `c_rho int_F f K(x, .)` for one facet with its canonical orientation.
pub(crate) fn facet_kernel(pl: &Planar, f: &Facet, x: &[f64], rho: f64, field: &BoundaryField) -> f64 {
    let n = facet_normal(pl, f);
    let orth = field.needs_orth(pl);
    facet_kernel_integral(&pl.frame, f, x, rho, field.facet_constant(pl, f), orth, |y| field.normal_part(y, &n))
}

/// `S_ij(f)(x)`: the kernel integral over the boundary of cell `i` minus
/// that over the boundary of cell `j`, each with its exterior normal.
pub(crate) fn s_ij_engine(pl: &Planar, i: usize, j: usize, x: &[f64], rho: f64, field: &BoundaryField) -> f64 {
    pl.part
        .facets
        .iter()
        .map(|f| {
            let w = f.sign(i) - f.sign(j);
            if w == 0.0 {
                0.0
            } else {
                w * facet_kernel(pl, f, x, rho, field)
            }
        })
        .sum()
}

/// Per-cell first-order volume change `sum_j int_{Sigma_ij} f_ij gamma`.
pub fn volume_defects(p: &PartitionSpec, field: &BoundaryField, budget: &Budget) -> Result<Vec<Estimate>> {
    field.check(p.dimension())?;
    if budget.mode != Mode::MonteCarlo {
        if let Some(pl) = Planar::of_partition(p) {
            let orth = field.needs_orth(&pl);
            let mut out = vec![Estimate::closed_form(0.0); p.len()];
            for f in &pl.part.facets {
                let n = facet_normal(&pl, f);
                let (v, e) = facet_gamma_integral(&pl.frame, f, orth, |y| field.normal_part(y, &n));
                let est = Estimate::quadrature(v, e.max(QUADRATURE_BOUND));
                out[f.from] = out[f.from].add(&est);
                out[f.to] = out[f.to].sub(&est);
            }
            return Ok(out);
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    let n = budget.require_samples()?.max(1) as usize;
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let mut total = Estimate::closed_form(0.0);
        for j in 0..p.len() {
            if j == i {
                continue;
            }
            let (a, b) = (i.min(j), i.max(j));
            let sb = match boundary_sample_detailed(p, a, b, n, budget.seed ^ ((a * p.len() + b) as u64)) {
                Ok(sb) => sb,
                Err(Error::EmptyInterface(..)) => continue,
                Err(e) => return Err(e),
            };
            let sign = if i < j { 1.0 } else { -1.0 };
            let terms: Vec<f64> = sb
                .points
                .iter()
                .map(|q| sign * q.weight * density(&q.location) * field.normal_part(&q.location, &q.normal))
                .collect();
            total = total.add(&boundary_sum(&sb, &terms));
        }
        out.push(total);
    }
    Ok(out)
}

/// A sum of `n` independent terms, reported with its Monte Carlo error.
pub(crate) fn sum_estimate(terms: &[f64]) -> Estimate {
    let n = terms.len() as f64;
    if terms.is_empty() {
        return Estimate::closed_form(0.0);
    }
    let mean = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 { terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Estimate::monte_carlo(mean * n, (var * n).sqrt(), terms.len() as u64)
}

/// `sum terms` over boundary samples, with the sampling error of the
/// terms combined with the error of each facet's estimated mass (fully
/// correlated within a facet, independent across facets).
pub(crate) fn boundary_sum(sb: &SampledBoundary, terms: &[f64]) -> Estimate {
    let base = sum_estimate(terms);
    let mut per_facet = vec![0.0; sb.mass_rel_error.len()];
    for (t, f) in terms.iter().zip(&sb.facet) {
        per_facet[*f] += t;
    }
    let mass_var: f64 = per_facet.iter().zip(&sb.mass_rel_error).map(|(s, r)| (s * r).powi(2)).sum();
    Estimate { std_error: (base.std_error.powi(2) + mass_var).sqrt(), ..base }
}

pub(crate) fn unsupported() -> Error {
    Error::Unsupported("quadrature needs polyhedral cells spanning at most two normal directions".into())
}

/// Value of `T_rho(1_i - 1_j)` along an interface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constancy {
    pub interface: (usize, usize),
    pub mean: f64,
    pub max_deviation: f64,
    /// Three pointwise standard errors (or error bounds).
    pub tolerance: f64,
    pub values: Vec<Estimate>,
}

/// `T_rho(1_i - 1_j)(x) - T_rho(1_i - 1_j)(y)` should vanish for all
/// `x, y` on the interface of a critical partition.
pub fn first_variation_constancy(
    p: &PartitionSpec,
    rho: Correlation,
    i: usize,
    j: usize,
    n: usize,
    budget: &Budget,
) -> Result<Constancy> {
    let rho = rho.nonzero()?;
    let (a, b) = interface_pair(p, i, j)?;
    let pts = boundary_sample(p, a, b, n, budget.seed)?;
    let values = t_difference_at(p, a, b, &pts.iter().map(|q| q.location.clone()).collect::<Vec<_>>(), rho, budget)?;
    let mean = values.iter().map(|e| e.value).sum::<f64>() / values.len() as f64;
    let max_deviation = values.iter().map(|e| (e.value - mean).abs()).fold(0.0, f64::max);
    let tolerance = 3.0 * values.iter().map(|e| e.std_error).fold(0.0, f64::max);
    Ok(Constancy { interface: (a, b), mean, max_deviation, tolerance, values })
}

/// `T_rho(1_a - 1_b)` at each point, one estimate per point.
pub(crate) fn t_difference_at(
    p: &PartitionSpec,
    a: usize,
    b: usize,
    xs: &[Vec<f64>],
    rho: Correlation,
    budget: &Budget,
) -> Result<Vec<Estimate>> {
    let r = rho.value();
    if budget.mode != Mode::MonteCarlo {
        if let Some(pl) = Planar::of_partition(p) {
            return Ok(xs
                .iter()
                .map(|x| Estimate::quadrature(pl.t_cell(a, x, r) - pl.t_cell(b, x, r), 2.0 * QUADRATURE_BOUND))
                .collect());
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    let n = budget.require_samples()?;
    let s = rho.sigma();
    let d = p.dimension();
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, x)| {
            sample_mean(n, budget.seed.wrapping_add(k as u64 + 1), |rng| {
                let mut y = vec![0.0; d];
                standard_normal(rng, &mut y);
                y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = r * xi + s * *yi);
                let c = p.membership(&y);
                if c == a {
                    1.0
                } else if c == b {
                    -1.0
                } else {
                    0.0
                }
            })
        })
        .collect())
}

/// Moment-form estimate of `grad T_rho(1_a - 1_b)(x)`.
pub(crate) fn gradient_difference(
    p: &PartitionSpec,
    pl: Option<&Planar>,
    a: usize,
    b: usize,
    x: &[f64],
    rho: Correlation,
    samples: u64,
    seed: u64,
) -> Vec<Estimate> {
    let r = rho.value();
    if let Some(pl) = pl {
        let (ga, gb) = (pl.grad(a, x, r), pl.grad(b, x, r));
        let bound = 2.0 * QUADRATURE_BOUND * r.abs() / rho.sigma();
        return ga.iter().zip(&gb).map(|(u, v)| Estimate::quadrature(u - v, bound)).collect();
    }
    let d = x.len();
    let s = rho.sigma();
    crate::mc::sample_means(samples, seed, d, |rng, out| {
        standard_normal(rng, out);
        let y: Vec<f64> = x.iter().zip(out.iter()).map(|(xi, zi)| r * xi + s * zi).collect();
        let c = p.membership(&y);
        let w = if c == a {
            r / s
        } else if c == b {
            -r / s
        } else {
            0.0
        };
        out.iter_mut().for_each(|z| *z *= w);
    })
}

/// `S(f)(x) = c_rho int_Sigma f(y) exp(-|y - rho x|^2 / (2 sigma^2)) dy`
/// estimated from weighted boundary samples. The samples must carry the
/// exterior normal of the set whose boundary they cover.
pub fn s_operator(boundary: &[BoundaryPoint], rho: Correlation, field: &BoundaryField, x: &[f64]) -> Result<Estimate> {
    let rho = rho.nonzero()?;
    if boundary.is_empty() || boundary.iter().any(|b| !(b.weight > 0.0) || !b.weight.is_finite()) {
        return Err(Error::UnweightedBoundary);
    }
    let terms: Vec<f64> =
        boundary.iter().map(|b| b.weight * kernel_k(x, &b.location, rho) * field.normal_part(&b.location, &b.normal)).collect();
    Ok(sum_estimate(&terms))
}

/// `c_rho exp(-|y - rho x|^2 / (2 sigma^2))` with `c_rho = (2 pi sigma^2)^(-d/2)`.
pub(crate) fn kernel_k(x: &[f64], y: &[f64], rho: Correlation) -> f64 {
    let r = rho.value();
    let s2 = 1.0 - r * r;
    let q: f64 = x.iter().zip(y).map(|(a, b)| (b - r * a) * (b - r * a)).sum();
    (2.0 * std::f64::consts::PI * s2).powf(-(x.len() as f64) / 2.0) * (-q / (2.0 * s2)).exp()
}

/// Boundary samples covering `∂Ω_i ∪ ∂Ω_j` with the weights of the
/// operator `S_ij`: samples on the boundary of `i` enter with its
/// exterior normal, samples on the boundary of `j` with minus its
/// exterior normal, so that `sum w f K` estimates `S_ij(f)`.
pub(crate) fn s_ij_samples(p: &PartitionSpec, i: usize, j: usize, n: usize, seed: u64) -> Result<SampledBoundary> {
    let mut out = SampledBoundary::default();
    for (cell, sign) in [(i, 1.0), (j, -1.0)] {
        for k in 0..p.len() {
            if k == cell {
                continue;
            }
            let (lo, hi) = (cell.min(k), cell.max(k));
            let mut sb = match boundary_sample_detailed(p, lo, hi, n, seed ^ (0x51 * (lo * p.len() + hi + 1) as u64)) {
                Ok(sb) => sb,
                Err(Error::EmptyInterface(..)) => continue,
                Err(e) => return Err(e),
            };
            // Sampled normals point from the lower to the higher index.
            let ext = if cell == lo { 1.0 } else { -1.0 };
            for b in &mut sb.points {
                b.normal.iter_mut().for_each(|v| *v *= ext * sign);
            }
            out.append(sb);
        }
    }
    Ok(out)
}

/// `s_operator` over samples whose facet masses carry their own error.
pub(crate) fn s_operator_sampled(sb: &SampledBoundary, rho: Correlation, field: &BoundaryField, x: &[f64]) -> Estimate {
    let terms: Vec<f64> = sb
        .points
        .iter()
        .map(|b| b.weight * kernel_k(x, &b.location, rho) * field.normal_part(&b.location, &b.normal))
        .collect();
    boundary_sum(sb, &terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    #[test]
    fn s_of_constant_on_a_line() {
        // {x_1 <= 0} in R^2, f = 1, x = 0: the kernel integral is 1/(sqrt(2 pi) sigma).
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0], 0.0).unwrap();
        let expect = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.8);
        let pts = boundary_sample(&p, 0, 1, 20_000, 5).unwrap();
        let field = BoundaryField::Translation(vec![1.0, 0.0]);
        let s = s_operator(&pts, rho(0.6), &field, &[0.0, 0.0]).unwrap();
        assert!(s.agrees_with(expect, 4.0), "{s:?}");
        let pl = Planar::of_partition(&p).unwrap();
        let e = facet_kernel(&pl, &pl.part.facets[0], &[0.0, 0.0], 0.6, &field);
        assert!((e - expect).abs() < 1e-14);
        let zero = BoundaryField::normal_scalar(|_, _| 0.0);
        assert_eq!(s_operator(&pts, rho(0.6), &zero, &[0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn unweighted_points_are_rejected() {
        let b = BoundaryPoint { location: vec![0.0], normal: vec![1.0], interface: (0, 1), weight: 0.0 };
        assert!(matches!(
            s_operator(&[b], rho(0.5), &BoundaryField::Dilation, &[0.0]),
            Err(Error::UnweightedBoundary)
        ));
    }

    #[test]
    fn half_space_constancy_value() {
        let a: f64 = 0.4;
        let r: f64 = 0.3;
        let p = PartitionSpec::half_spaces(vec![0.0, 1.0], a).unwrap();
        let c = first_variation_constancy(&p, rho(r), 0, 1, 20, &Budget::quadrature()).unwrap();
        let expect = 2.0 * crate::special::norm_cdf(a * (1.0 - r) / (1.0 - r * r).sqrt()) - 1.0;
        assert!((c.mean - expect).abs() < 1e-12);
        assert!(c.max_deviation < 1e-12);
    }

    #[test]
    fn volume_defects_of_translation_are_moments() {
        // d/ds gamma(Omega_i + s v) = -<v, int_{Omega_i} x gamma>.
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let v = vec![0.3, -0.8];
        let d = volume_defects(&p, &BoundaryField::Translation(v.clone()), &Budget::quadrature()).unwrap();
        for (i, c) in p.cells().iter().enumerate() {
            let m = crate::stability::cell_moment(c, 2, &Budget::quadrature()).unwrap();
            let expect = -(v[0] * m[0].value + v[1] * m[1].value);
            assert!((d[i].value - expect).abs() < 1e-11, "{} {}", d[i].value, expect);
        }
        let m = volume_defects(&p, &BoundaryField::Translation(v), &Budget::monte_carlo(20_000, 3)).unwrap();
        assert!(m.iter().zip(&d).all(|(a, b)| (a.value - b.value).abs() < 5.0 * a.std_error + 1e-3), "{m:?} {d:?}");
    }
}
