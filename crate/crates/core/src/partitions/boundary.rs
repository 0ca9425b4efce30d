//! Gaussian sampling of the interface between two cells.

use rand::Rng;

use super::{HalfSpace, PartitionSpec};
use crate::error::{Error, Result};
use crate::gaussian::{density, dot, standard_normal};
use crate::mc::stream_rng;
use crate::special::norm_pdf;

/// Offset used to decide which cells lie on either side of a boundary point.
pub const NORMAL_PROBE: f64 = 1e-6;
const PILOT: usize = 4096;

/// A point of the interface between cells `interface.0 < interface.1`.
/// `normal` points from the first cell into the second; `weight` is a
/// quadrature weight with respect to (d-1)-dimensional surface measure.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub location: Vec<f64>,
    pub normal: Vec<f64>,
    pub interface: (usize, usize),
    pub weight: f64,
}

impl BoundaryPoint {
    /// The same point seen from the other side, with `N_ji = -N_ij`.
    pub fn swapped(&self) -> (Vec<f64>, (usize, usize)) {
        (self.normal.iter().map(|v| -v).collect(), (self.interface.1, self.interface.0))
    }
}

/// Hyperplanes that can carry part of the interface between `i` and `j`,
/// oriented so the normal points out of `i`.
fn candidate_planes(p: &PartitionSpec, i: usize) -> Result<Vec<HalfSpace>> {
    let d = p.dimension();
    let pieces = p.cells()[i]
        .pieces(d)
        .ok_or_else(|| Error::Unsupported("boundary sampling needs polyhedral cells".into()))?;
    let mut planes: Vec<HalfSpace> = Vec::new();
    for h in pieces.into_iter().flatten() {
        let same = |g: &HalfSpace| {
            let e = g.normal.iter().zip(&h.normal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            e < 1e-12 && (g.offset - h.offset).abs() < 1e-12
        };
        if !planes.iter().any(same) {
            planes.push(h);
        }
    }
    Ok(planes)
}

fn project<R: Rng + ?Sized>(h: &HalfSpace, rng: &mut R, z: &mut [f64]) {
    standard_normal(rng, z);
    let s = dot(&h.normal, z) - h.offset;
    z.iter_mut().zip(&h.normal).for_each(|(x, n)| *x -= s * n);
}

fn on_interface(p: &PartitionSpec, h: &HalfSpace, x: &[f64], i: usize, j: usize) -> bool {
    let shift = |sgn: f64| -> Vec<f64> { x.iter().zip(&h.normal).map(|(a, n)| a + sgn * NORMAL_PROBE * n).collect() };
    p.membership(&shift(-1.0)) == i && p.membership(&shift(1.0)) == j
}

/// `n` points on the interface of cells `i` and `j` drawn from the Gaussian
/// surface measure, split across facets in proportion to their mass.
pub fn boundary_sample(p: &PartitionSpec, i: usize, j: usize, n: usize, seed: u64) -> Result<Vec<BoundaryPoint>> {
    Ok(boundary_sample_detailed(p, i, j, n, seed)?.points)
}

/// Boundary samples with the facet each came from and the relative
/// standard error of every facet's estimated Gaussian mass.
#[derive(Debug, Clone, Default)]
pub(crate) struct SampledBoundary {
    pub points: Vec<BoundaryPoint>,
    pub facet: Vec<usize>,
    pub mass_rel_error: Vec<f64>,
}

impl SampledBoundary {
    pub fn append(&mut self, other: SampledBoundary) {
        let base = self.mass_rel_error.len();
        self.points.extend(other.points);
        self.facet.extend(other.facet.into_iter().map(|f| f + base));
        self.mass_rel_error.extend(other.mass_rel_error);
    }
}

pub(crate) fn boundary_sample_detailed(
    p: &PartitionSpec,
    i: usize,
    j: usize,
    n: usize,
    seed: u64,
) -> Result<SampledBoundary> {
    p.check_index(i)?;
    p.check_index(j)?;
    if n == 0 {
        return Err(Error::EmptyBudget);
    }
    let (a, b) = (i.min(j), i.max(j));
    if a == b {
        return Err(Error::EmptyInterface(i, j));
    }
    let d = p.dimension();
    let planes = candidate_planes(p, a)?;
    let mut z = vec![0.0; d];
    // Pilot acceptance rates give the Gaussian surface mass of each facet.
    let pilot = PILOT.max(4 * n);
    let mut mass = Vec::with_capacity(planes.len());
    let mut hits = Vec::with_capacity(planes.len());
    for (k, h) in planes.iter().enumerate() {
        let mut rng = stream_rng(seed, 2 * k as u64);
        let mut count = 0usize;
        for _ in 0..pilot {
            project(h, &mut rng, &mut z);
            if on_interface(p, h, &z, a, b) {
                count += 1;
            }
        }
        hits.push(count);
        mass.push(norm_pdf(h.offset) * count as f64 / pilot as f64);
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyInterface(i, j));
    }
    let counts = largest_remainder(&mass, n);
    let mut out = SampledBoundary::default();
    for (k, h) in planes.iter().enumerate() {
        if counts[k] == 0 {
            continue;
        }
        let mut rng = stream_rng(seed, 2 * k as u64 + 1);
        let mut taken = 0;
        let mut tries = 0usize;
        while taken < counts[k] {
            tries += 1;
            if tries > 1000 * PILOT * counts[k] {
                return Err(Error::EmptyInterface(i, j));
            }
            project(h, &mut rng, &mut z);
            if !on_interface(p, h, &z, a, b) {
                continue;
            }
            let weight = mass[k] / (counts[k] as f64 * density(&z));
            out.points.push(BoundaryPoint { location: z.clone(), normal: h.normal.clone(), interface: (a, b), weight });
            out.facet.push(out.mass_rel_error.len());
            taken += 1;
        }
        let q = hits[k] as f64 / pilot as f64;
        out.mass_rel_error.push(((1.0 - q) / hits[k] as f64).sqrt());
    }
    Ok(out)
}

fn largest_remainder(mass: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = mass.iter().sum();
    let quota: Vec<f64> = mass.iter().map(|m| m / total * n as f64).collect();
    let mut counts: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&x, &y| (quota[y] - quota[y].floor()).total_cmp(&(quota[x] - quota[x].floor())).then(x.cmp(&y)));
    let short = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainders_sum_to_total() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0.0, 2.0], 5), vec![0, 5]);
    }

    #[test]
    fn weights_recover_surface_mass() {
        // Gaussian surface mass of the interface of a half-space at offset 0.5.
        let p = PartitionSpec::half_spaces(vec![0.0, 1.0], 0.5).unwrap();
        let pts = boundary_sample(&p, 0, 1, 500, 3).unwrap();
        let m: f64 = pts.iter().map(|b| b.weight * density(&b.location)).sum();
        assert!((m - norm_pdf(0.5)).abs() < 1e-12);
        assert!(pts.iter().all(|b| (b.location[1] - 0.5).abs() < 1e-12 && b.normal == vec![0.0, 1.0]));
    }
}
