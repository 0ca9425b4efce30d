//! The negative-correlation side: translation identities and the
//! translation second variation for a pair of partitions whose cells are
//! compared by `sum_i P(X in p_i, Y in q_i)`.

use serde::Serialize;

use super::{eigen::record, s_ij_engine, unsupported, BoundaryField, ResidualReport};
use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{dot, norm, Correlation};
use crate::partitions::{boundary_sample, PartitionSpec};
use crate::planar::{bilinear_planar, facet_gamma_integral, Planar, PAIR_BOUND, QUADRATURE_BOUND};
use crate::stability::bilinear_stability;

/// Components of `grad T_rho(1_{p_i} - 1_{p_j})` at a point of the
/// interface `q_ij`, split along the normal `N'_ij` of `q_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignRecord {
    pub interface: (usize, usize),
    pub point: Vec<f64>,
    pub normal_component: f64,
    pub cross_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BilinearReport {
    /// `S_ij(<v, N>)(x)` over the interfaces of `p` against
    /// `-<v, N'_ij(x)> |grad T_rho(1_{p_i} - 1_{p_j})(x)| / rho` at points of `q_ij`.
    pub translation: ResidualReport,
    pub signs: Vec<SignRecord>,
    /// `(1 - 1/rho) sum_{i<j} int_{q_ij} |grad T_rho(1_{p_i} - 1_{p_j})| <v, N'_ij>^2 gamma`.
    pub second_closed: Estimate,
    /// Half the second derivative of `sum_i P(X in p_i + s v, Y in q_i + s v)`
    /// at `s = 0`, by Richardson-extrapolated central differences.
    pub second_difference: Estimate,
    pub pair: Estimate,
    /// `p` against itself.
    pub nested: Estimate,
    /// `p` against its reflection `-p`.
    pub opposing: Estimate,
}

impl BilinearReport {
    /// Every gradient points along `+N'` with a cross component below `tol`.
    pub fn signs_hold(&self, tol: f64) -> bool {
        self.signs.iter().all(|s| s.normal_component > 0.0 && s.cross_norm <= tol)
    }
}

const DIFF_STEP: f64 = 1e-2;

fn raw_pair(p: &PartitionSpec, q: &PartitionSpec, v: &[f64], s: f64, r: f64) -> Result<f64> {
    let shift: Vec<f64> = v.iter().map(|x| s * x).collect();
    let (a, b) = Planar::of_pair(&p.translate(&shift)?, &q.translate(&shift)?).ok_or_else(unsupported)?;
    Ok(bilinear_planar(&a.part, &b.part, r))
}

/// Translation checks for the pair `(p, q)` along the first coordinate
/// axis, evaluated at `n` sampled points of each interface of `q`.
/// Requires both partitions to be planar in a shared frame.
pub fn bilinear_variation_suite(p: &PartitionSpec, q: &PartitionSpec, rho: Correlation, n: usize, budget: &Budget) -> Result<BilinearReport> {
    let rho = rho.nonzero()?;
    let pair = bilinear_stability(p, q, rho, budget)?;
    if budget.mode == Mode::MonteCarlo {
        return Err(unsupported());
    }
    let (pp, pq) = Planar::of_pair(p, q).ok_or_else(unsupported)?;
    let r = rho.value();
    let d = p.dimension();
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    let field = BoundaryField::Translation(v.clone());

    let mut records = Vec::new();
    let mut signs = Vec::new();
    for a in 0..q.len() {
        for b in a + 1..q.len() {
            let pts = match boundary_sample(q, a, b, n, budget.seed ^ (a * q.len() + b) as u64) {
                Ok(pts) => pts,
                Err(Error::EmptyInterface(..)) => continue,
                Err(e) => return Err(e),
            };
            for x in pts {
                let g: Vec<f64> = pp.grad(a, &x.location, r).iter().zip(pp.grad(b, &x.location, r)).map(|(u, w)| u - w).collect();
                let gn = norm(&g);
                let lhs = Estimate::quadrature(s_ij_engine(&pp, a, b, &x.location, r, &field), QUADRATURE_BOUND);
                let rhs = Estimate::quadrature(-dot(&v, &x.normal) * gn / r, QUADRATURE_BOUND);
                records.push(record((a, b), x.location.clone(), lhs, rhs));
                let along = dot(&g, &x.normal);
                let cross: f64 = g.iter().zip(&x.normal).map(|(gi, ni)| (gi - along * ni).powi(2)).sum::<f64>().sqrt();
                signs.push(SignRecord { interface: (a, b), point: x.location, normal_component: along, cross_norm: cross });
            }
        }
    }

    let mut val = 0.0;
    let mut err = 0.0;
    for f in &pq.part.facets {
        let nq = pq.frame.lift_dir(f.a);
        let vn = dot(&v, &nq);
        let (s, e) = facet_gamma_integral(&pq.frame, f, false, |y| {
            let g: Vec<f64> = pp.grad(f.from, y, r).iter().zip(pp.grad(f.to, y, r)).map(|(u, w)| u - w).collect();
            norm(&g) * vn * vn
        });
        val += s;
        err += e;
    }
    let second_closed = Estimate::quadrature((1.0 - 1.0 / r) * val, (1.0 / r - 1.0) * err.max(QUADRATURE_BOUND));

    let b0 = raw_pair(p, q, &v, 0.0, r)?;
    let half_second = |h: f64| -> Result<f64> {
        Ok((raw_pair(p, q, &v, h, r)? + raw_pair(p, q, &v, -h, r)? - 2.0 * b0) / (2.0 * h * h))
    };
    let (d1, d2) = (half_second(DIFF_STEP)?, half_second(2.0 * DIFF_STEP)?);
    let extrapolated = (4.0 * d1 - d2) / 3.0;
    let bound = (d1 - d2).abs() / 3.0 + 8.0 * PAIR_BOUND / (DIFF_STEP * DIFF_STEP);
    let second_difference = Estimate::quadrature(extrapolated, bound);

    let nested = bilinear_stability(p, p, rho, budget)?;
    let opposing = bilinear_stability(p, &p.negate(), rho, budget)?;
    Ok(BilinearReport {
        translation: ResidualReport::new(records),
        signs,
        second_closed,
        second_difference,
        pair,
        nested,
        opposing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::density;

    fn line_pair() -> (PartitionSpec, PartitionSpec) {
        let p = PartitionSpec::half_spaces(vec![1.0], 0.0).unwrap();
        let q = p.negate();
        (p, q)
    }

    #[test]
    fn opposing_half_lines() {
        let (p, q) = line_pair();
        for r in [0.3, 0.5, 0.8] {
            let rep = bilinear_variation_suite(&p, &q, Correlation::new(r).unwrap(), 4, &Budget::quadrature()).unwrap();
            assert!(rep.translation.max_residual < 1e-9, "{}", rep.translation.max_residual);
            assert!(rep.signs_hold(1e-12));
            let sigma = (1.0 - r * r).sqrt();
            let phi0 = density(&[0.0]);
            let expect = -2.0 * (1.0 - r) * phi0 * phi0 / sigma;
            assert!((rep.second_closed.value - expect).abs() < 1e-9);
            assert!((rep.second_difference.value - expect).abs() < 3.0 * rep.second_difference.std_error + 1e-9);
            assert!(rep.nested.value > rep.opposing.value);
        }
    }

    #[test]
    fn reflected_simplex_cones() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let rep = bilinear_variation_suite(&p, &p.negate(), Correlation::new(0.5).unwrap(), 6, &Budget::quadrature()).unwrap();
        assert!(rep.translation.passes(1.0), "{}", rep.translation.max_residual);
        assert!(rep.signs_hold(1e-9), "{:?}", rep.signs);
        assert!(rep.second_closed.value < 0.0);
        let tol = 3.0 * rep.second_closed.combined_error(&rep.second_difference);
        assert!((rep.second_closed.value - rep.second_difference.value).abs() < tol);
    }
}
