//! Second variations: the boundary quadratic form, the exact
//! transport formula, the translation closed form and the
//! hyperstability finite-difference probe.

use serde::Serialize;

use super::{
    boundary_sum, facet_normal, gradient_difference, s_ij_engine, s_ij_samples, s_operator_sampled, t_difference_at,
    unsupported, volume_defects, BoundaryField,
};
use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{density, dot, Correlation};
use crate::partitions::{boundary_sample_detailed, PartitionSpec};
use crate::planar::{facet_gamma_integral, Facet, Planar, QUADRATURE_BOUND};
use crate::stability::partition_stability;

/// Tolerance on volume defects for deterministic evaluation.
const VOLUME_TOL: f64 = 1e-8;
/// Step in the flow parameter for finite differences.
pub const FLOW_STEP: f64 = 1e-3;

fn planar_for(p: &PartitionSpec, budget: &Budget) -> Result<Option<Planar>> {
    if budget.mode == Mode::MonteCarlo {
        return Ok(None);
    }
    match Planar::of_partition(p) {
        Some(pl) => Ok(Some(pl)),
        None if budget.mode == Mode::Quadrature => Err(unsupported()),
        None => {
            budget.require_samples()?;
            Ok(None)
        }
    }
}

fn sum_facets<G: Fn(&Facet, &[f64], &[f64]) -> f64>(pl: &Planar, orth: bool, g: G) -> Estimate {
    let mut v = 0.0;
    let mut e = 0.0;
    for f in &pl.part.facets {
        let n = facet_normal(pl, f);
        let (a, b) = facet_gamma_integral(&pl.frame, f, orth, |y| g(f, y, &n));
        v += a;
        e += b;
    }
    Estimate::quadrature(v, e.max(QUADRATURE_BOUND))
}

fn grad_norm(pl: &Planar, f: &Facet, y: &[f64], r: f64) -> f64 {
    let (ga, gb) = (pl.grad(f.from, y, r), pl.grad(f.to, y, r));
    ga.iter().zip(&gb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn n_outer(budget: &Budget) -> Result<usize> {
    Ok(((budget.require_samples()? as f64).sqrt().ceil() as usize).max(16))
}

fn interfaces(p: &PartitionSpec) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..p.len()).flat_map(move |a| (a + 1..p.len()).map(move |b| (a, b)))
}

/// `sum_{i<j} int_{Sigma_ij} gamma f_ij S_ij(f)`, which equals
/// `sum_i int int G(x, y) f_i(x) f_i(y)` over each cell boundary and is
/// therefore nonnegative.
pub fn g_form(p: &PartitionSpec, rho: Correlation, field: &BoundaryField, budget: &Budget) -> Result<Estimate> {
    let rho = rho.nonzero()?;
    field.check(p.dimension())?;
    let r = rho.value();
    if let Some(pl) = planar_for(p, budget)? {
        let orth = field.needs_orth(&pl);
        return Ok(sum_facets(&pl, orth, |f, y, n| field.normal_part(y, n) * s_ij_engine(&pl, f.from, f.to, y, r, field)));
    }
    let n = n_outer(budget)?;
    let mut total = Estimate::closed_form(0.0);
    for (a, b) in interfaces(p) {
        let outer = match boundary_sample_detailed(p, a, b, n, budget.seed ^ 0x11) {
            Ok(s) => s,
            Err(Error::EmptyInterface(..)) => continue,
            Err(e) => return Err(e),
        };
        let inner = s_ij_samples(p, a, b, n, budget.seed ^ 0x22)?;
        let terms: Vec<f64> = outer
            .points
            .iter()
            .map(|q| {
                let s = s_operator_sampled(&inner, rho, field, &q.location).value;
                q.weight * density(&q.location) * field.normal_part(&q.location, &q.normal) * s
            })
            .collect();
        total = total.add(&boundary_sum(&outer, &terms));
    }
    Ok(total)
}

/// `sum_{i<j} int_{Sigma_ij} |grad T_rho(1_i - 1_j)| f_ij^2 gamma`.
pub fn gradient_term(p: &PartitionSpec, rho: Correlation, field: &BoundaryField, budget: &Budget) -> Result<Estimate> {
    let rho = rho.nonzero()?;
    field.check(p.dimension())?;
    let r = rho.value();
    if let Some(pl) = planar_for(p, budget)? {
        let orth = field.needs_orth(&pl);
        return Ok(sum_facets(&pl, orth, |f, y, n| grad_norm(&pl, f, y, r) * field.normal_part(y, n).powi(2)));
    }
    let n = n_outer(budget)?;
    let mut total = Estimate::closed_form(0.0);
    for (a, b) in interfaces(p) {
        let outer = match boundary_sample_detailed(p, a, b, n, budget.seed ^ 0x33) {
            Ok(s) => s,
            Err(Error::EmptyInterface(..)) => continue,
            Err(e) => return Err(e),
        };
        let terms: Vec<f64> = outer
            .points
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let g = gradient_difference(p, None, a, b, &q.location, rho, n as u64 * 16, budget.seed.wrapping_add(k as u64));
                let gn = g.iter().map(|e| e.value * e.value).sum::<f64>().sqrt();
                q.weight * density(&q.location) * gn * field.normal_part(&q.location, &q.normal).powi(2)
            })
            .collect();
        total = total.add(&boundary_sum(&outer, &terms));
    }
    Ok(total)
}

fn check_volume(p: &PartitionSpec, field: &BoundaryField, budget: &Budget) -> Result<Vec<Estimate>> {
    let defects = volume_defects(p, field, budget)?;
    Ok(defects)
}

fn volume_violation(defects: &[Estimate]) -> Option<Error> {
    defects.iter().enumerate().find_map(|(cell, e)| {
        let tolerance = (3.0 * e.std_error).max(VOLUME_TOL);
        (e.value.abs() > tolerance).then_some(Error::VolumeConstraint { cell, defect: e.value, tolerance })
    })
}

/// The second variation in the form
/// `sum int int G f f - sum int |grad T_rho(1_i - 1_j)| f^2 gamma`.
/// For two cells this is reported for the single set `Omega_1`, which is
/// half the value of the pairwise sum.
pub fn second_variation_general(p: &PartitionSpec, rho: Correlation, field: &BoundaryField, budget: &Budget) -> Result<Estimate> {
    let defects = check_volume(p, field, budget)?;
    if let Some(e) = volume_violation(&defects) {
        return Err(e);
    }
    let g = g_form(p, rho, field, budget)?;
    let grad = gradient_term(p, rho, field, budget)?;
    let v = g.sub(&grad);
    Ok(if p.len() == 2 { v.scale(0.5) } else { v })
}

/// Largest `|T_rho(1_i - 1_j)|` found on a few points of each facet.
fn max_interface_value(pl: &Planar, r: f64) -> f64 {
    let zero = vec![0.0; pl.frame.orth_dim()];
    let mut worst: f64 = 0.0;
    for f in &pl.part.facets {
        let ends: Vec<f64> = [f.lo, f.hi].iter().filter(|v| v.is_finite()).copied().collect();
        let mut lams = vec![0.0f64.clamp(f.lo, f.hi)];
        match ends.as_slice() {
            [a, b] => lams.extend([0.75 * a + 0.25 * b, 0.5 * (a + b), 0.25 * a + 0.75 * b]),
            [a] => lams.extend([a + 0.5, a + 2.0].iter().map(|v| if *a == f.lo { *v } else { 2.0 * a - v })),
            _ => lams.extend([-2.0, 1.0, 3.0]),
        }
        for lam in lams {
            let y = pl.frame.lift(f.point(lam), &zero);
            worst = worst.max((pl.t_cell(f.from, &y, r) - pl.t_cell(f.to, &y, r)).abs());
        }
    }
    worst
}

/// `(1/rho - 1) sum_{i<j} int |grad T_rho(1_i - 1_j)| <v, N_ij>^2 gamma`,
/// which is half the second derivative of `partition_stability` along the
/// translation `p + s v`. The formula needs the translation to preserve
/// every cell's measure to first order, or every `T_rho(1_i - 1_j)` to
/// vanish on its interface; either makes the curvature remainder zero.
pub fn second_variation_translation(p: &PartitionSpec, rho: Correlation, v: &[f64], budget: &Budget) -> Result<Estimate> {
    let rho = rho.nonzero()?;
    let field = BoundaryField::Translation(v.to_vec());
    field.check(p.dimension())?;
    let r = rho.value();
    let defects = check_volume(p, &field, budget)?;
    if let Some(err) = volume_violation(&defects) {
        let balanced = match planar_for(p, budget)? {
            Some(pl) => max_interface_value(&pl, r) <= VOLUME_TOL,
            None => {
                let mut ok = true;
                for (a, b) in interfaces(p) {
                    let pts = match boundary_sample_detailed(p, a, b, 8, budget.seed ^ 0x44) {
                        Ok(s) => s.points,
                        Err(Error::EmptyInterface(..)) => continue,
                        Err(e) => return Err(e),
                    };
                    let xs: Vec<Vec<f64>> = pts.into_iter().map(|q| q.location).collect();
                    ok &= t_difference_at(p, a, b, &xs, rho, budget)?.iter().all(|e| e.value.abs() <= 3.0 * e.std_error);
                }
                ok
            }
        };
        if !balanced {
            return Err(err);
        }
    }
    Ok(gradient_term(p, rho, &field, budget)?.scale(1.0 / r - 1.0))
}

/// Half the second derivative of `partition_stability` along the flow of
/// a vector field, from the transport formula
/// `sum_F int_F [S_ij(f) + <grad T_rho(1_i - 1_j), X> + T_rho(1_i - 1_j)(div X - <X, x>)] f gamma`.
/// No criticality or volume condition is needed.
pub fn second_variation_exact(p: &PartitionSpec, rho: Correlation, field: &BoundaryField, budget: &Budget) -> Result<Estimate> {
    let rho = rho.nonzero()?;
    field.check(p.dimension())?;
    if matches!(field, BoundaryField::NormalScalar(_)) {
        return Err(Error::InvalidSpec("the transport formula needs a vector field".into()));
    }
    let pl = Planar::of_partition(p).filter(|_| budget.mode != Mode::MonteCarlo).ok_or_else(unsupported)?;
    let r = rho.value();
    let orth = field.needs_orth(&pl);
    Ok(sum_facets(&pl, orth, |f, y, n| {
        let x = field.vector(y).expect("vector field");
        let fv = dot(&x, n);
        let s = s_ij_engine(&pl, f.from, f.to, y, r, field);
        let (ga, gb) = (pl.grad(f.from, y, r), pl.grad(f.to, y, r));
        let grad_x: f64 = ga.iter().zip(&gb).zip(&x).map(|((a, b), xi)| (a - b) * xi).sum();
        let c = pl.t_cell(f.from, y, r) - pl.t_cell(f.to, y, r);
        let div = field.divergence(y).expect("vector field") - dot(&x, y);
        (s + grad_x + c * div) * fv
    }))
}

/// Finite-difference derivatives of stability along a flow, with the
/// closed-form values they are checked against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyperstability {
    /// `d^2/ds^2` of `partition_stability` at `s = 0`.
    pub second: Estimate,
    /// `d^2/(ds d rho)` at `s = 0` and the given `rho`.
    pub mixed: Estimate,
    /// `2 (second_variation_exact)`, the transport formula.
    pub second_exact: Option<Estimate>,
    /// For the dilation-weighted field on partitions that are cylinders
    /// in the last coordinate: twice
    /// `(1/rho - 1) sum int <x, N>^2 |grad T| gamma + (1 - rho^2) sum int <x, N> dT/d rho gamma`
    /// plus the curvature remainder `int T (div X - <X, x>) f gamma`, which
    /// vanishes when every `T_rho(1_i - 1_j)` is zero on its interface.
    pub second_assembly: Option<Estimate>,
    /// `2 sum_F int_F d/d rho T_rho(1_i - 1_j) f gamma`.
    pub mixed_closed: Option<Estimate>,
    /// First-order change of each cell's measure. The closed forms above do
    /// not need these to vanish, but maximality statements do.
    pub volume_defects: Vec<Estimate>,
}

/// Stability along the flow of `field`, differentiated by central
/// differences with steps `FLOW_STEP` in `s` and `1e-3 (1 - rho)` in `rho`.
/// Monte Carlo evaluations reuse one seed across the whole stencil. The
/// field need not preserve cell measures; the defects are reported.
pub fn hyperstability_probe(p: &PartitionSpec, rho: Correlation, field: &BoundaryField, budget: &Budget) -> Result<Hyperstability> {
    let rho = rho.nonzero()?;
    field.check(p.dimension())?;
    let r = rho.value();
    let hr = 1e-3 * (1.0 - r);
    let (lo, hi) = rho.stencil(hr)?;
    if lo.value() <= 0.0 {
        return Err(Error::StepOutOfRange { rho: r, step: hr });
    }
    let volume_defects = check_volume(p, field, budget)?;
    let flowed = |s: f64| -> Result<PartitionSpec> {
        let t = field.flow(s).ok_or_else(|| Error::InvalidSpec("field has no explicit flow".into()))?;
        p.transform(&t)
    };
    let h = FLOW_STEP;
    let (pm, p0, pp) = (flowed(-h)?, p.clone(), flowed(h)?);
    let stab = |q: &PartitionSpec, c: Correlation| partition_stability(q, c, budget);
    let second = stab(&pp, rho)?.add(&stab(&pm, rho)?).sub(&stab(&p0, rho)?.scale(2.0)).scale(1.0 / (h * h));
    let ds = |c: Correlation| -> Result<Estimate> { Ok(stab(&pp, c)?.sub(&stab(&pm, c)?).scale(0.5 / h)) };
    let mixed = ds(hi)?.sub(&ds(lo)?).scale(0.5 / hr);

    let pl = if budget.mode == Mode::MonteCarlo { None } else { Planar::of_partition(p) };
    let (second_exact, second_assembly, mixed_closed) = match &pl {
        Some(pl) if !matches!(field, BoundaryField::NormalScalar(_)) => {
            let exact = second_variation_exact(p, rho, field, budget)?.scale(2.0);
            let orth = field.needs_orth(pl);
            let mixed_closed = sum_facets(pl, orth, |f, y, n| {
                2.0 * (pl.rho_derivative(f.from, y, r) - pl.rho_derivative(f.to, y, r)) * field.normal_part(y, n)
            });
            let assembly = if matches!(field, BoundaryField::DilationWeighted) && last_axis_free(pl) {
                let main = sum_facets(pl, false, |f, y, _| {
                    let g = grad_norm(pl, f, y, r);
                    let dr = pl.rho_derivative(f.from, y, r) - pl.rho_derivative(f.to, y, r);
                    (1.0 / r - 1.0) * f.t * f.t * g + (1.0 - r * r) * f.t * dr
                });
                let rem = sum_facets(pl, orth, |f, y, n| {
                    let x = field.vector(y).expect("vector field");
                    let c = pl.t_cell(f.from, y, r) - pl.t_cell(f.to, y, r);
                    c * (field.divergence(y).expect("vector field") - dot(&x, y)) * dot(&x, n)
                });
                Some(main.add(&rem).scale(2.0))
            } else {
                None
            };
            (Some(exact), assembly, Some(mixed_closed))
        }
        _ => (None, None, None),
    };
    Ok(Hyperstability { second, mixed, volume_defects, second_exact, second_assembly, mixed_closed })
}

/// Whether every facet normal is orthogonal to the last coordinate axis.
fn last_axis_free(pl: &Planar) -> bool {
    pl.part.facets.iter().all(|f| {
        let n = facet_normal(pl, f);
        n[n.len() - 1].abs() < 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::simplex_generators;

    fn rho(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    #[test]
    fn translation_matches_transport_and_differences() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let z = simplex_generators(3, 2).unwrap();
        let b = Budget::quadrature();
        for r in [0.4, 0.7] {
            let closed = second_variation_translation(&p, rho(r), &z[0], &b).unwrap();
            let exact = second_variation_exact(&p, rho(r), &BoundaryField::Translation(z[0].clone()), &b).unwrap();
            assert!((closed.value - exact.value).abs() < 1e-9, "{} {}", closed.value, exact.value);
            assert!(closed.value > 0.0);
            let hs = hyperstability_probe(&p, rho(r), &BoundaryField::Translation(z[0].clone()), &b).unwrap();
            assert!((hs.second.value - 2.0 * closed.value).abs() < 3.0 * hs.second.std_error, "{:?} {:?}", hs.second, closed);
            assert!(hs.volume_defects.iter().any(|e| e.value.abs() > 1e-3));
        }
    }

    #[test]
    fn shifted_half_space_needs_the_remainder() {
        // {x_1 <= 0.7} in R^2 with X = x_2 x: the transport formula matches
        // finite differences, and the assembly matches once the remainder is added.
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0], 0.7).unwrap();
        let hs = hyperstability_probe(&p, rho(0.5), &BoundaryField::DilationWeighted, &Budget::quadrature()).unwrap();
        let exact = hs.second_exact.unwrap();
        let asm = hs.second_assembly.unwrap();
        assert!((exact.value - 2.0 * -0.033_619_024_808_866_83).abs() < 1e-9, "{}", exact.value);
        assert!((asm.value - exact.value).abs() < 1e-9);
        assert!((hs.second.value - exact.value).abs() < 3.0 * hs.second.combined_error(&exact));
        let mc = hs.mixed_closed.unwrap();
        assert!((hs.mixed.value - mc.value).abs() < 3.0 * hs.mixed.combined_error(&mc), "{:?} {:?}", hs.mixed, mc);
    }

    #[test]
    fn half_space_hermite_field_is_neutral() {
        // f = x_2 on {x_1 <= 0}: the G term and the gradient term cancel.
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0], 0.0).unwrap();
        let f = BoundaryField::normal_scalar(|x, _| x[1]);
        let v = second_variation_general(&p, rho(0.6), &f, &Budget::quadrature()).unwrap();
        assert!(v.value.abs() < 1e-9, "{}", v.value);
        let g = g_form(&p, rho(0.6), &f, &Budget::quadrature()).unwrap();
        let expect = 2.0 * 0.6 / 0.8 / (2.0 * std::f64::consts::PI);
        assert!((g.value - expect).abs() < 1e-10, "{} {}", g.value, expect);
    }

    #[test]
    fn cylinder_cones_are_flat_along_the_weighted_dilation() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap().cylinder_extend(1).unwrap();
        let hs = hyperstability_probe(&p, rho(0.5), &BoundaryField::DilationWeighted, &Budget::quadrature()).unwrap();
        for e in [hs.second_exact.unwrap(), hs.second_assembly.unwrap(), hs.mixed_closed.unwrap()] {
            assert!(e.value.abs() < 1e-8, "{:?}", e);
        }
        assert!(hs.second.value.abs() < 3.0 * hs.second.std_error.max(1e-6), "{:?}", hs.second);
        assert!(hs.mixed.value.abs() < 3.0 * hs.mixed.std_error.max(1e-6), "{:?}", hs.mixed);
    }

    #[test]
    fn g_form_sampling_agrees_with_engine() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let f = BoundaryField::normal_scalar(|x, _| x[0] * x[1]);
        let q = g_form(&p, rho(0.5), &f, &Budget::quadrature()).unwrap();
        let m = g_form(&p, rho(0.5), &f, &Budget::monte_carlo(40_000, 6)).unwrap();
        assert!(q.value > 0.0);
        assert!((q.value - m.value).abs() < 4.0 * m.std_error + 1e-3, "{} {:?}", q.value, m);
    }
}
