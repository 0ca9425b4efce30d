//! Noise stability of sets and partitions, its bilinear variant, the
//! propeller functional and the half-space optimum.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{bivariate_normal_cdf, dot, fill_correlated_pair, norm, standard_normal, Correlation};
use crate::mc::{sample_mean, sample_means};
use crate::partitions::{gaussian_measure, HalfSpace, PartitionSpec, SetSpec};
use crate::planar::{bilinear_planar, polygon_mass, Frame, Line, Planar, PAIR_BOUND, QUADRATURE_BOUND};
use crate::special::{norm_pdf, norm_quantile};

fn indicator(b: bool) -> f64 {
    f64::from(u8::from(b))
}

fn dimension_of(s: &SetSpec) -> Result<usize> {
    s.dimension().ok_or_else(|| Error::InvalidSpec("set has no intrinsic dimension".into()))
}

fn mc_pairs<F: Fn(&[f64], &[f64]) -> f64 + Sync>(d: usize, rho: Correlation, budget: &Budget, f: F) -> Result<Estimate> {
    let n = budget.require_samples()?;
    Ok(sample_mean(n, budget.seed, |rng| {
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        fill_correlated_pair(rho, rng, &mut x, &mut y);
        f(&x, &y)
    }))
}

fn unsupported() -> Error {
    Error::Unsupported("quadrature needs polyhedral cells spanning at most two normal directions".into())
}

/// `P(X in set, Y in set)` for `rho`-correlated standard Gaussians.
pub fn noise_stability(s: &SetSpec, rho: Correlation, budget: &Budget) -> Result<Estimate> {
    let d = dimension_of(s)?;
    let r = rho.value();
    if budget.mode != Mode::MonteCarlo {
        if r == 0.0 {
            let g = gaussian_measure(s, budget)?;
            return Ok(Estimate { value: g.value * g.value, std_error: 2.0 * g.std_error, ..g });
        }
        match s {
            SetSpec::HalfSpace(h) => return Ok(Estimate::closed_form(bivariate_normal_cdf(h.offset, h.offset, rho))),
            SetSpec::Product { base, .. } => return noise_stability(base, rho, budget),
            SetSpec::Complement(b) => {
                let g = gaussian_measure(b, budget)?;
                let st = noise_stability(b, rho, budget)?;
                return Ok(st.sub(&g.scale(2.0)).add(&Estimate::closed_form(1.0)));
            }
            _ => {}
        }
        if let Some(pl) = Planar::of_set(s, d) {
            return Ok(Estimate::quadrature(bilinear_planar(&pl.part, &pl.part, r), PAIR_BOUND));
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    mc_pairs(d, rho, budget, |x, y| indicator(s.contains(x) && s.contains(y)))
}

/// `sum_i P(X in cell i, Y in cell i)`, exact at `rho = 0`.
pub fn partition_stability(p: &PartitionSpec, rho: Correlation, budget: &Budget) -> Result<Estimate> {
    let r = rho.value();
    if r == 0.0 {
        let mut total = Estimate::closed_form(0.0);
        for c in p.cells() {
            let g = gaussian_measure(c, budget)?;
            total = total.add(&Estimate { value: g.value * g.value, std_error: 2.0 * g.std_error, ..g });
        }
        return Ok(total);
    }
    if budget.mode != Mode::MonteCarlo {
        if let Some(pl) = Planar::of_partition(p) {
            return Ok(Estimate::quadrature(bilinear_planar(&pl.part, &pl.part, r), PAIR_BOUND));
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    mc_pairs(p.dimension(), rho, budget, |x, y| indicator(p.membership(x) == p.membership(y)))
}

/// `sum_i P(X in p_i, Y in q_i)` for partitions with matching cell measures.
pub fn bilinear_stability(p: &PartitionSpec, q: &PartitionSpec, rho: Correlation, budget: &Budget) -> Result<Estimate> {
    if p.dimension() != q.dimension() {
        return Err(Error::DimensionMismatch { expected: p.dimension(), found: q.dimension() });
    }
    if p.len() != q.len() {
        return Err(Error::CellCountMismatch(p.len(), q.len()));
    }
    for (i, (a, b)) in p.cells().iter().zip(q.cells()).enumerate() {
        let (ga, gb) = (gaussian_measure(a, budget)?, gaussian_measure(b, budget)?);
        let tol = (3.0 * ga.combined_error(&gb)).max(1e-9);
        if (ga.value - gb.value).abs() > tol {
            return Err(Error::MeasureConstraint { cell: i, left: ga.value, right: gb.value });
        }
    }
    let r = rho.value();
    if budget.mode != Mode::MonteCarlo && r != 0.0 {
        if let Some((a, b)) = Planar::of_pair(p, q) {
            return Ok(Estimate::quadrature(bilinear_planar(&a.part, &b.part, r), PAIR_BOUND));
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    mc_pairs(p.dimension(), rho, budget, |x, y| indicator(p.membership(x) == q.membership(y)))
}

/// `P(X <= a, Y <= a)` with `a = Phi^{-1}(measure)`: the stability of a
/// half-space of the given Gaussian measure.
pub fn half_space_stability_closed_form(measure: f64, rho: Correlation) -> Result<f64> {
    if !(measure > 0.0 && measure < 1.0) {
        return Err(Error::InvalidMeasure(measure));
    }
    let a = norm_quantile(measure);
    Ok(bivariate_normal_cdf(a, a, rho))
}

/// `int_A x gamma(x) dx` for one cell.
pub fn cell_moment(s: &SetSpec, d: usize, budget: &Budget) -> Result<Vec<Estimate>> {
    s.validate(d)?;
    if budget.mode != Mode::MonteCarlo {
        if let Some(m) = moment_closed(s, d) {
            return Ok(m.into_iter().map(|v| Estimate::quadrature(v, QUADRATURE_BOUND)).collect());
        }
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
    }
    let n = budget.require_samples()?;
    Ok(sample_means(n, budget.seed, d, |rng, out| {
        standard_normal(rng, out);
        if !s.contains(out) {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    }))
}

fn moment_closed(s: &SetSpec, d: usize) -> Option<Vec<f64>> {
    match s {
        SetSpec::HalfSpace(h) => Some(h.normal.iter().map(|n| -norm_pdf(h.offset) * n).collect()),
        SetSpec::Sector { start, end } => {
            let k = (PI / 2.0).sqrt() / (2.0 * PI);
            Some(vec![k * (end.sin() - start.sin()), k * (start.cos() - end.cos())])
        }
        _ => {
            let mut total = vec![0.0; d];
            for poly in s.pieces(d)? {
                let m = polytope_moment(&poly, d)?;
                total.iter_mut().zip(&m).for_each(|(t, v)| *t += v);
            }
            Some(total)
        }
    }
}

/// By the divergence theorem, `int_P x gamma = -sum_F N_F gamma(F)` over
/// the facets of P, and each facet mass factors as `phi(c_F)` times a
/// lower-dimensional Gaussian mass that is planar whenever the facet's own
/// constraints span at most two directions.
fn polytope_moment(poly: &[HalfSpace], d: usize) -> Option<Vec<f64>> {
    let mut total = vec![0.0; d];
    for (k, h) in poly.iter().enumerate() {
        if poly[..k].iter().any(|g| g == h) {
            continue;
        }
        let basis = complement_basis(&h.normal);
        let mut lines: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut empty = false;
        for (j, g) in poly.iter().enumerate() {
            if j == k || g == h {
                continue;
            }
            let a: Vec<f64> = basis.iter().map(|b| dot(b, &g.normal)).collect();
            let t = g.offset - h.offset * dot(&g.normal, &h.normal);
            let len = norm(&a);
            if len < 1e-12 {
                empty |= t < -1e-12;
            } else {
                lines.push((a.iter().map(|v| v / len).collect(), t / len));
            }
        }
        if empty {
            continue;
        }
        let normals: Vec<&[f64]> = lines.iter().map(|(a, _)| a.as_slice()).collect();
        let mass = if basis.is_empty() {
            1.0
        } else {
            let frame = Frame::from_normals(basis.len(), &normals)?;
            let planar: Vec<Line> = lines
                .iter()
                .map(|(a, t)| {
                    let w = frame.project(a);
                    let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
                    Line { a: [w[0] / n, w[1] / n], t: t / n }
                })
                .collect();
            polygon_mass(&planar, [0.0, 0.0], 1.0)
        };
        let w = norm_pdf(h.offset) * mass;
        total.iter_mut().zip(&h.normal).for_each(|(t, n)| *t -= w * n);
    }
    Some(total)
}

fn complement_basis(n: &[f64]) -> Vec<Vec<f64>> {
    let d = n.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d.saturating_sub(1));
    for k in 0..d {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for _ in 0..2 {
            for b in std::iter::once(&n.to_vec()).chain(basis.iter()) {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let len = norm(&v);
        if len > 0.5 && basis.len() + 1 < d {
            basis.push(v.iter().map(|x| x / len).collect());
        }
    }
    basis
}

/// `sum_i |int_{A_i} x gamma(x) dx|^2`. The Monte Carlo error is the
/// delta-method standard error of the squared norms.
pub fn propeller_functional(p: &PartitionSpec, budget: &Budget) -> Result<Estimate> {
    let d = p.dimension();
    let mut value = 0.0;
    let mut var = 0.0;
    let mut bound = 0.0;
    let mut samples = 0;
    let mut mc = false;
    for c in p.cells() {
        for m in cell_moment(c, d, budget)? {
            value += m.value * m.value;
            let e = 2.0 * m.value.abs() * m.std_error;
            if m.method == crate::estimate::Method::MonteCarlo {
                mc = true;
                var += e * e;
                samples = m.samples;
            } else {
                bound += e + m.std_error * m.std_error;
            }
        }
    }
    Ok(if mc {
        Estimate::monte_carlo(value, (var.sqrt() + bound).max(0.0), samples)
    } else {
        Estimate::quadrature(value, bound.max(QUADRATURE_BOUND))
    })
}

/// `int_A x gamma(x) dx` summed over all cells, which should vanish.
pub fn propeller_balance(p: &PartitionSpec, budget: &Budget) -> Result<Vec<Estimate>> {
    let d = p.dimension();
    let mut total: Option<Vec<Estimate>> = None;
    for c in p.cells() {
        let m = cell_moment(c, d, budget)?;
        total = Some(match total {
            None => m,
            Some(t) => t.iter().zip(&m).map(|(a, b)| a.add(b)).collect(),
        });
    }
    Ok(total.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    #[test]
    fn half_space_is_sheppard() {
        let h = SetSpec::half_space(vec![1.0, 0.0], 0.0).unwrap();
        let q = noise_stability(&h, rho(0.5), &Budget::quadrature()).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-12);
        let p = PartitionSpec::half_spaces(vec![0.0, 1.0], 0.0).unwrap();
        let s = partition_stability(&p, rho(0.5), &Budget::quadrature()).unwrap();
        assert!((s.value - 2.0 / 3.0).abs() < 1e-10, "{}", s.value);
        let m = partition_stability(&p, rho(0.5), &Budget::monte_carlo(200_000, 1)).unwrap();
        assert!(m.agrees_with(2.0 / 3.0, 4.0));
    }

    #[test]
    fn sector_and_cone_quadrature_agree() {
        let s = SetSpec::Sector { start: -PI / 3.0, end: PI / 3.0 };
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let a = noise_stability(&s, rho(0.4), &Budget::quadrature()).unwrap();
        let b = noise_stability(&p.cells()[0], rho(0.4), &Budget::quadrature()).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        let m = noise_stability(&s, rho(0.4), &Budget::monte_carlo(400_000, 9)).unwrap();
        assert!(m.agrees_with(a.value, 4.0));
    }

    #[test]
    fn sector_moments() {
        let p = PartitionSpec::sectors(&[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0]).unwrap();
        let v = propeller_functional(&p, &Budget::quadrature()).unwrap();
        assert!((v.value - 9.0 / (8.0 * PI)).abs() < 1e-12);
        let c = PartitionSpec::simplex_cones(3, 2).unwrap();
        let w = propeller_functional(&c, &Budget::quadrature()).unwrap();
        assert!((w.value - 9.0 / (8.0 * PI)).abs() < 1e-10, "{}", w.value);
    }

    #[test]
    fn tetrahedral_cone_moments_balance() {
        let c = PartitionSpec::simplex_cones(4, 3).unwrap();
        let b = propeller_balance(&c, &Budget::quadrature()).unwrap();
        assert!(b.iter().all(|e| e.value.abs() < 1e-10));
        let q = propeller_functional(&c, &Budget::quadrature()).unwrap();
        let m = propeller_functional(&c, &Budget::monte_carlo(400_000, 4)).unwrap();
        assert!((q.value - m.value).abs() < 4.0 * m.std_error + 1e-4, "{} {}", q.value, m.value);
    }

    #[test]
    fn emptying_two_cells_beats_simplex_cones() {
        let nowhere = || SetSpec::Cell(vec![HalfSpace::new(vec![1.0, 0.0], 0.0).unwrap(), HalfSpace::new(vec![-1.0, 0.0], -1.0).unwrap()]);
        let merged = PartitionSpec::new(2, vec![SetSpec::Cell(Vec::new()), nowhere(), nowhere()]).unwrap();
        let cones = PartitionSpec::simplex_cones(3, 2).unwrap();
        let b = Budget::monte_carlo(200_000, 3);
        let m = partition_stability(&merged, rho(0.3), &b).unwrap();
        let c = partition_stability(&cones, rho(0.3), &b).unwrap();
        assert_eq!(m.value, 1.0);
        assert!(m.value > c.value + 3.0 * c.std_error, "{} {}", m.value, c.value);
    }

    #[test]
    fn measure_constraint_is_enforced() {
        let p = PartitionSpec::half_spaces(vec![1.0], 0.0).unwrap();
        let q = PartitionSpec::half_spaces(vec![1.0], 0.5).unwrap();
        assert!(matches!(
            bilinear_stability(&p, &q, rho(0.5), &Budget::quadrature()),
            Err(Error::MeasureConstraint { .. })
        ));
        let s = bilinear_stability(&p, &p.negate(), rho(0.5), &Budget::quadrature()).unwrap();
        assert!((s.value - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn closed_form_rejects_bad_measure() {
        assert!(half_space_stability_closed_form(1.0, rho(0.5)).is_err());
        let v = half_space_stability_closed_form(0.5, rho(0.5)).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
    }
}
