//! Pointwise residuals of the translation and dilation eigen-identities
//! of `S_ij` on an interface.

use serde::Serialize;

use super::{gradient_difference, interface_pair, s_ij_engine, s_ij_samples, s_operator_sampled, unsupported, BoundaryField};
use crate::error::Result;
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{dot, standard_normal, Correlation};
use crate::mc::sample_mean;
use crate::partitions::{boundary_sample, PartitionSpec};
use crate::planar::{Planar, QUADRATURE_BOUND};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub interface: (usize, usize),
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub records: Vec<ResidualRecord>,
    pub max_residual: f64,
}

impl ResidualReport {
    pub(super) fn new(records: Vec<ResidualRecord>) -> Self {
        let max_residual = records.iter().map(|r| r.residual).fold(0.0, f64::max);
        Self { records, max_residual }
    }

    /// Every residual within its tolerance times `scale`.
    pub fn passes(&self, scale: f64) -> bool {
        self.records.iter().all(|r| r.residual <= scale * r.tolerance)
    }

    /// Smallest tolerance over the records.
    pub fn min_tolerance(&self) -> f64 {
        self.records.iter().map(|r| r.tolerance).fold(f64::INFINITY, f64::min)
    }
}

pub(super) fn record(interface: (usize, usize), point: Vec<f64>, lhs: Estimate, rhs: Estimate) -> ResidualRecord {
    ResidualRecord {
        interface,
        point,
        lhs: lhs.value,
        rhs: rhs.value,
        residual: (lhs.value - rhs.value).abs(),
        tolerance: 3.0 * lhs.combined_error(&rhs),
    }
}

/// `|g|` from componentwise estimates, with a delta-method error.
fn norm_estimate(g: &[Estimate]) -> Estimate {
    let n = g.iter().map(|e| e.value * e.value).sum::<f64>().sqrt();
    if g.iter().all(|e| e.method != crate::estimate::Method::MonteCarlo) {
        let bound = g.iter().map(|e| e.std_error).sum::<f64>();
        return Estimate::quadrature(n, bound);
    }
    let se = if n > 0.0 {
        g.iter().map(|e| (e.value / n * e.std_error).powi(2)).sum::<f64>().sqrt()
    } else {
        g.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt()
    };
    Estimate::monte_carlo(n, se, g[0].samples)
}

struct Setup {
    pl: Option<Planar>,
    interface: (usize, usize),
    points: Vec<crate::partitions::BoundaryPoint>,
}

fn setup(p: &PartitionSpec, i: usize, j: usize, n: usize, budget: &Budget) -> Result<Setup> {
    let interface = interface_pair(p, i, j)?;
    let pl = if budget.mode == Mode::MonteCarlo { None } else { Planar::of_partition(p) };
    if pl.is_none() {
        if budget.mode == Mode::Quadrature {
            return Err(unsupported());
        }
        budget.require_samples()?;
    }
    let points = boundary_sample(p, interface.0, interface.1, n, budget.seed)?;
    Ok(Setup { pl, interface, points })
}

/// `S_ij(<v, N>)(x)` against `<v, N_ij(x)> |grad T_rho(1_i - 1_j)(x)| / rho`
/// at `n` sampled points of the interface.
pub fn translation_eigen_residual(
    p: &PartitionSpec,
    rho: Correlation,
    v: &[f64],
    i: usize,
    j: usize,
    n: usize,
    budget: &Budget,
) -> Result<ResidualReport> {
    let rho = rho.nonzero()?;
    let field = BoundaryField::Translation(v.to_vec());
    field.check(p.dimension())?;
    let st = setup(p, i, j, n, budget)?;
    let (a, b) = st.interface;
    let r = rho.value();
    let s_pts = match &st.pl {
        Some(_) => Default::default(),
        None => s_ij_samples(p, a, b, budget.samples as usize, budget.seed ^ 0xa5)?,
    };
    let mut records = Vec::with_capacity(st.points.len());
    for (k, q) in st.points.iter().enumerate() {
        let x = &q.location;
        let lhs = match &st.pl {
            Some(pl) => Estimate::quadrature(s_ij_engine(pl, a, b, x, r, &field), QUADRATURE_BOUND),
            None => s_operator_sampled(&s_pts, rho, &field, x),
        };
        let g = gradient_difference(p, st.pl.as_ref(), a, b, x, rho, budget.samples, budget.seed.wrapping_add(k as u64 + 1));
        let rhs = norm_estimate(&g).scale(dot(v, &q.normal) / r);
        records.push(record(st.interface, x.clone(), lhs, rhs));
    }
    Ok(ResidualReport::new(records))
}

/// `S_ij(<., N>)(x)` against
/// `<x, N_ij> |grad T_rho(1_i - 1_j)(x)| / rho^2 + (1/rho^2 - 1) rho d/d rho T_rho(1_i - 1_j)(x)`,
/// an arrangement of the dilation identity that keeps the kernel integral
/// alone on one side. The rho-derivative is a central difference in rho.
pub fn dilation_eigen_residual(
    p: &PartitionSpec,
    rho: Correlation,
    i: usize,
    j: usize,
    n: usize,
    budget: &Budget,
) -> Result<ResidualReport> {
    let rho = rho.nonzero()?;
    let st = setup(p, i, j, n, budget)?;
    let (a, b) = st.interface;
    let r = rho.value();
    let h = rho.fd_step();
    let (lo, hi) = rho.stencil(h)?;
    let field = BoundaryField::Dilation;
    let s_pts = match &st.pl {
        Some(_) => Default::default(),
        None => s_ij_samples(p, a, b, budget.samples as usize, budget.seed ^ 0xa5)?,
    };
    let d = p.dimension();
    let mut records = Vec::with_capacity(st.points.len());
    for (k, q) in st.points.iter().enumerate() {
        let x = &q.location;
        let seed = budget.seed.wrapping_add(k as u64 + 1);
        let xn = dot(x, &q.normal);
        let (lhs, drho) = match &st.pl {
            Some(pl) => {
                let t = |c: f64| pl.t_cell(a, x, c) - pl.t_cell(b, x, c);
                let fd = (t(hi.value()) - t(lo.value())) / (2.0 * h);
                (
                    Estimate::quadrature(s_ij_engine(pl, a, b, x, r, &field), QUADRATURE_BOUND),
                    Estimate::quadrature(fd, 2.0 * QUADRATURE_BOUND / h + h * h),
                )
            }
            None => {
                let s = rho.sigma();
                let heat = sample_mean(budget.samples, seed ^ 0x3c, |rng| {
                    let mut z = vec![0.0; d];
                    standard_normal(rng, &mut z);
                    let y: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| r * xi + s * zi).collect();
                    let c = p.membership(&y);
                    let w = if c == a {
                        1.0
                    } else if c == b {
                        -1.0
                    } else {
                        return 0.0;
                    };
                    let zz: f64 = z.iter().map(|v| v * v).sum();
                    w * (r / s * dot(x, &z) - r * r / (s * s) * (zz - d as f64)) / r
                });
                (s_operator_sampled(&s_pts, rho, &field, x), heat)
            }
        };
        let rhs_rho = drho.scale((1.0 / (r * r) - 1.0) * r);
        let rhs = if xn.abs() > 1e-14 {
            let g = gradient_difference(p, st.pl.as_ref(), a, b, x, rho, budget.samples, seed);
            norm_estimate(&g).scale(xn / (r * r)).add(&rhs_rho)
        } else {
            rhs_rho
        };
        records.push(record(st.interface, x.clone(), lhs, rhs));
    }
    Ok(ResidualReport::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(r: f64) -> Correlation {
        Correlation::new(r).unwrap()
    }

    #[test]
    fn translation_identity_on_half_spaces() {
        for a in [0.0, 0.5] {
            for r in [0.3, 0.7] {
                let p = PartitionSpec::half_spaces(vec![1.0, 0.0], a).unwrap();
                let rep = translation_eigen_residual(&p, rho(r), &[1.0, 0.0], 0, 1, 10, &Budget::quadrature()).unwrap();
                assert!(rep.max_residual < 1e-9, "{}", rep.max_residual);
                let par = translation_eigen_residual(&p, rho(r), &[0.0, 1.0], 0, 1, 5, &Budget::quadrature()).unwrap();
                assert!(par.records.iter().all(|q| q.lhs.abs() < 1e-14 && q.rhs.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn dilation_identity_on_shifted_half_space() {
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0], 1.0).unwrap();
        let rep = dilation_eigen_residual(&p, rho(0.5), 0, 1, 10, &Budget::quadrature()).unwrap();
        assert!(rep.passes(1.0), "{:?}", rep.records[0]);
        assert!(rep.records.iter().all(|q| q.lhs.abs() > 1e-3));
    }

    #[test]
    fn simplex_cones_satisfy_both_identities() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let z = crate::partitions::simplex_generators(3, 2).unwrap();
        let t = translation_eigen_residual(&p, rho(0.6), &z[0], 0, 1, 15, &Budget::quadrature()).unwrap();
        assert!(t.passes(1.0), "{}", t.max_residual);
        let dl = dilation_eigen_residual(&p, rho(0.6), 1, 2, 15, &Budget::quadrature()).unwrap();
        assert!(dl.passes(1.0), "{}", dl.max_residual);
    }

    #[test]
    fn monte_carlo_path_matches_engine() {
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0], 0.5).unwrap();
        let rep = translation_eigen_residual(&p, rho(0.5), &[1.0, 0.0], 0, 1, 3, &Budget::monte_carlo(40_000, 8)).unwrap();
        for q in &rep.records {
            assert!(q.residual < 2.0 * q.tolerance, "{q:?}");
        }
    }
}
