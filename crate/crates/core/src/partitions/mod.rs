//! Half-spaces, simplex cones, sectors and their combinations as partitions
//! of R^d.

mod boundary;
mod json;

pub use boundary::{boundary_sample, BoundaryPoint, NORMAL_PROBE};
pub(crate) use boundary::{boundary_sample_detailed, SampledBoundary};
pub use json::{HalfSpaceDoc, PartitionDoc, SetDoc};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate, Mode};
use crate::gaussian::{check_dim, dot, norm, standard_normal};
use crate::mc::sample_mean;
use crate::planar::{Frame, PlanarPartition};
use crate::special::norm_cdf;

/// The closed half-space `<normal, x> <= offset` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm(&normal);
        if normal.is_empty() || !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("half-space needs a finite normal and offset".into()));
        }
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("half-space normal has length {n}, expected 1")));
        }
        Ok(Self { normal, offset })
    }

    /// Rescales an arbitrary nonzero normal (and the offset with it).
    pub fn normalized(normal: Vec<f64>, offset: f64) -> Option<Self> {
        let n = norm(&normal);
        if !(n > 1e-14) || !n.is_finite() {
            return None;
        }
        Some(Self { normal: normal.iter().map(|v| v / n).collect(), offset: offset / n })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dot(&self.normal, x) <= self.offset
    }

    pub fn flipped(&self) -> Self {
        Self { normal: self.normal.iter().map(|v| -v).collect(), offset: -self.offset }
    }

    fn padded(&self, extra: usize) -> Self {
        let mut normal = self.normal.clone();
        normal.extend(std::iter::repeat_n(0.0, extra));
        Self { normal, offset: self.offset }
    }
}

/// The cell where `<x, z_index> + b_index` attains the maximum over all
/// generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub generators: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub index: usize,
}

impl Cone {
    pub fn new(generators: Vec<Vec<f64>>, index: usize) -> Result<Self> {
        let m = generators.len();
        Self::with_offsets(generators, vec![0.0; m], index)
    }

    pub fn with_offsets(generators: Vec<Vec<f64>>, offsets: Vec<f64>, index: usize) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidSpec("cone needs at least one generator".into()));
        }
        let d = generators[0].len();
        if d == 0 || generators.iter().any(|z| z.len() != d || z.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSpec("cone generators must be finite and of equal dimension".into()));
        }
        if offsets.len() != generators.len() || offsets.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidSpec("cone offsets must match the generators".into()));
        }
        if index >= generators.len() {
            return Err(Error::IndexOutOfRange { index, cells: generators.len() });
        }
        Ok(Self { generators, offsets, index })
    }

    fn score(&self, x: &[f64], j: usize) -> f64 {
        dot(&self.generators[j], x) + self.offsets[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let own = self.score(x, self.index);
        (0..self.generators.len()).all(|j| self.score(x, j) <= own)
    }

    fn constraints(&self) -> Option<Vec<HalfSpace>> {
        let zi = &self.generators[self.index];
        let bi = self.offsets[self.index];
        let mut out = Vec::new();
        for (j, zj) in self.generators.iter().enumerate() {
            if j == self.index {
                continue;
            }
            let n: Vec<f64> = zj.iter().zip(zi).map(|(a, b)| a - b).collect();
            let c = bi - self.offsets[j];
            match HalfSpace::normalized(n, c) {
                Some(h) => out.push(h),
                None if c < 0.0 => return None,
                None => {}
            }
        }
        Some(out)
    }
}

pub type IndicatorFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// One cell of a partition.
#[derive(Clone)]
pub enum SetSpec {
    HalfSpace(HalfSpace),
    Cone(Cone),
    /// Points of R^2 whose polar angle lies in `[start, end)`.
    Sector { start: f64, end: f64 },
    /// Intersection of finitely many half-spaces.
    Cell(Vec<HalfSpace>),
    /// Union of sets assumed disjoint up to boundaries.
    Union(Vec<SetSpec>),
    /// `base x R^extra`.
    Product { base: Box<SetSpec>, extra: usize },
    Complement(Box<SetSpec>),
    Oracle { dim: usize, f: IndicatorFn },
}

impl fmt::Debug for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSpec::HalfSpace(h) => f.debug_tuple("HalfSpace").field(h).finish(),
            SetSpec::Cone(c) => f.debug_tuple("Cone").field(c).finish(),
            SetSpec::Sector { start, end } => f.debug_struct("Sector").field("start", start).field("end", end).finish(),
            SetSpec::Cell(h) => f.debug_tuple("Cell").field(h).finish(),
            SetSpec::Union(u) => f.debug_tuple("Union").field(u).finish(),
            SetSpec::Product { base, extra } => {
                f.debug_struct("Product").field("base", base).field("extra", extra).finish()
            }
            SetSpec::Complement(b) => f.debug_tuple("Complement").field(b).finish(),
            SetSpec::Oracle { dim, .. } => f.debug_struct("Oracle").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

/// Affine and flow maps applied to whole partitions.
#[derive(Debug, Clone)]
pub enum Transform {
    Translate(Vec<f64>),
    /// `x -> Q x` for an orthogonal matrix given by rows.
    Rotate(Vec<Vec<f64>>),
    Negate,
    /// `x -> e^s x`, the flow of `X(x) = x`.
    Dilate(f64),
    /// `x -> x / (1 - s x_d)`, the flow of `X(x) = x_d x`.
    DilationWeighted(f64),
}

fn mat_vec(q: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    q.iter().map(|row| dot(row, x)).collect()
}

fn mat_t_vec(q: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = y.len();
    (0..d).map(|k| q.iter().zip(y).map(|(row, yi)| row[k] * yi).sum()).collect()
}

impl Transform {
    fn half_space(&self, h: &HalfSpace) -> HalfSpace {
        match self {
            Transform::Translate(t) => HalfSpace { normal: h.normal.clone(), offset: h.offset + dot(&h.normal, t) },
            Transform::Rotate(q) => {
                HalfSpace::normalized(mat_vec(q, &h.normal), h.offset).expect("rotation keeps unit normals")
            }
            Transform::Negate => HalfSpace { normal: h.normal.iter().map(|v| -v).collect(), offset: h.offset },
            Transform::Dilate(s) => HalfSpace { normal: h.normal.clone(), offset: h.offset * s.exp() },
            Transform::DilationWeighted(s) => {
                let mut n = h.normal.clone();
                let d = n.len();
                n[d - 1] -= h.offset * s;
                HalfSpace::normalized(n, h.offset).expect("transported normal is nonzero for small s")
            }
        }
    }

    fn cone(&self, c: &Cone) -> Cone {
        let mut out = c.clone();
        match self {
            Transform::Translate(t) => {
                for (b, z) in out.offsets.iter_mut().zip(&c.generators) {
                    *b -= dot(z, t);
                }
            }
            Transform::Rotate(q) => {
                out.generators = c.generators.iter().map(|z| mat_vec(q, z)).collect();
            }
            Transform::Negate => {
                out.generators = c.generators.iter().map(|z| z.iter().map(|v| -v).collect()).collect();
            }
            Transform::Dilate(s) => {
                out.offsets.iter_mut().for_each(|b| *b *= s.exp());
            }
            Transform::DilationWeighted(s) => {
                for (z, b) in out.generators.iter_mut().zip(&c.offsets) {
                    let d = z.len();
                    z[d - 1] += s * b;
                }
            }
        }
        out
    }

    /// Preimage of a point under the map, used for indicator oracles.
    fn pullback(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Transform::Translate(t) => y.iter().zip(t).map(|(a, b)| a - b).collect(),
            Transform::Rotate(q) => mat_t_vec(q, y),
            Transform::Negate => y.iter().map(|v| -v).collect(),
            Transform::Dilate(s) => y.iter().map(|v| v * (-s).exp()).collect(),
            Transform::DilationWeighted(s) => {
                let k = 1.0 + s * y[y.len() - 1];
                if k > 0.0 {
                    y.iter().map(|v| v / k).collect()
                } else {
                    y.to_vec()
                }
            }
        }
    }
}

impl SetSpec {
    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Ok(SetSpec::HalfSpace(HalfSpace::new(normal, offset)?))
    }

    pub fn complement(self) -> Self {
        SetSpec::Complement(Box::new(self))
    }

    /// Ambient dimension, when the set determines it.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            SetSpec::HalfSpace(h) => Some(h.normal.len()),
            SetSpec::Cone(c) => Some(c.generators[0].len()),
            SetSpec::Sector { .. } => Some(2),
            SetSpec::Cell(hs) => hs.first().map(|h| h.normal.len()),
            SetSpec::Union(u) => u.iter().find_map(|s| s.dimension()),
            SetSpec::Product { base, extra } => base.dimension().map(|d| d + extra),
            SetSpec::Complement(b) => b.dimension(),
            SetSpec::Oracle { dim, .. } => Some(*dim),
        }
    }

    pub(crate) fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            SetSpec::HalfSpace(h) => {
                check_dim(&h.normal, d)?;
                if (norm(&h.normal) - 1.0).abs() > 1e-9 {
                    return bad("half-space normal must be a unit vector".into());
                }
                Ok(())
            }
            SetSpec::Cone(c) => check_dim(&c.generators[0], d),
            SetSpec::Sector { start, end } => {
                if d != 2 {
                    return bad(format!("sector lives in dimension 2, partition has dimension {d}"));
                }
                let w = end - start;
                if !start.is_finite() || !end.is_finite() || !(0.0..=2.0 * PI + 1e-12).contains(&w) {
                    return bad("sector angles must satisfy 0 <= end - start <= 2 pi".into());
                }
                Ok(())
            }
            SetSpec::Cell(hs) => hs.iter().try_for_each(|h| SetSpec::HalfSpace(h.clone()).validate(d)),
            SetSpec::Union(u) => u.iter().try_for_each(|s| s.validate(d)),
            SetSpec::Product { base, extra } => {
                if *extra == 0 || *extra >= d {
                    return bad("product needs 1 <= extra < dimension".into());
                }
                base.validate(d - extra)
            }
            SetSpec::Complement(b) => b.validate(d),
            SetSpec::Oracle { dim, .. } => {
                if *dim == d {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch { expected: d, found: *dim })
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SetSpec::HalfSpace(h) => h.contains(x),
            SetSpec::Cone(c) => c.contains(x),
            SetSpec::Sector { start, end } => {
                let w = end - start;
                if w >= 2.0 * PI {
                    return true;
                }
                let theta = x[1].atan2(x[0]);
                (theta - start).rem_euclid(2.0 * PI) < w
            }
            SetSpec::Cell(hs) => hs.iter().all(|h| h.contains(x)),
            SetSpec::Union(u) => u.iter().any(|s| s.contains(x)),
            SetSpec::Product { base, extra } => base.contains(&x[..x.len() - extra]),
            SetSpec::Complement(b) => !b.contains(x),
            SetSpec::Oracle { f, .. } => f(x),
        }
    }

    /// Decomposition into convex polyhedral pieces (intersections of
    /// half-spaces) with disjoint interiors, or `None` for oracle sets.
    pub fn pieces(&self, d: usize) -> Option<Vec<Vec<HalfSpace>>> {
        match self {
            SetSpec::HalfSpace(h) => Some(vec![vec![h.clone()]]),
            SetSpec::Cone(c) => Some(c.constraints().map(|v| vec![v]).unwrap_or_default()),
            SetSpec::Sector { start, end } => {
                if d != 2 {
                    return None;
                }
                Some(sector_pieces(*start, *end))
            }
            SetSpec::Cell(hs) => Some(vec![hs.clone()]),
            SetSpec::Union(u) => {
                let mut out = Vec::new();
                for s in u {
                    out.extend(s.pieces(d)?);
                }
                Some(out)
            }
            SetSpec::Product { base, extra } => {
                let inner = base.pieces(d - extra)?;
                Some(inner.into_iter().map(|p| p.iter().map(|h| h.padded(*extra)).collect()).collect())
            }
            SetSpec::Complement(b) => {
                let inner = b.pieces(d)?;
                let mut acc: Vec<Vec<HalfSpace>> = vec![vec![]];
                for piece in &inner {
                    if piece.is_empty() {
                        return Some(vec![]);
                    }
                    // The complement of one piece, split into disjoint parts:
                    // constraints 0..k hold and constraint k fails.
                    let mut parts = Vec::new();
                    for k in 0..piece.len() {
                        let mut part: Vec<HalfSpace> = piece[..k].to_vec();
                        part.push(piece[k].flipped());
                        parts.push(part);
                    }
                    let mut next = Vec::new();
                    for a in &acc {
                        for p in &parts {
                            let mut merged = a.clone();
                            merged.extend(p.iter().cloned());
                            next.push(merged);
                        }
                    }
                    acc = next;
                }
                Some(acc)
            }
            SetSpec::Oracle { .. } => None,
        }
    }

    pub fn transform(&self, t: &Transform, d: usize) -> SetSpec {
        match self {
            SetSpec::HalfSpace(h) => SetSpec::HalfSpace(t.half_space(h)),
            SetSpec::Cone(c) => SetSpec::Cone(t.cone(c)),
            SetSpec::Cell(hs) => SetSpec::Cell(hs.iter().map(|h| t.half_space(h)).collect()),
            SetSpec::Union(u) => SetSpec::Union(u.iter().map(|s| s.transform(t, d)).collect()),
            SetSpec::Complement(b) => SetSpec::Complement(Box::new(b.transform(t, d))),
            SetSpec::Sector { start, end } if matches!(t, Transform::Negate | Transform::Dilate(_)) => {
                let shift = if matches!(t, Transform::Negate) { PI } else { 0.0 };
                SetSpec::Sector { start: start + shift, end: end + shift }
            }
            SetSpec::Sector { .. } | SetSpec::Product { .. } | SetSpec::Oracle { .. } => match self.pieces(d) {
                Some(pieces) if !matches!(self, SetSpec::Oracle { .. }) => {
                    SetSpec::Union(pieces.into_iter().map(SetSpec::Cell).collect()).transform(t, d)
                }
                _ => {
                    let inner = self.clone();
                    let map = t.clone();
                    SetSpec::Oracle { dim: d, f: Arc::new(move |y| inner.contains(&map.pullback(y))) }
                }
            },
        }
    }
}

fn sector_pieces(start: f64, end: f64) -> Vec<Vec<HalfSpace>> {
    let w = end - start;
    if w >= 2.0 * PI - 1e-15 {
        return vec![vec![]];
    }
    if w <= 0.0 {
        return vec![];
    }
    let wedge = |s: f64, e: f64| {
        vec![
            HalfSpace { normal: vec![s.sin(), -s.cos()], offset: 0.0 },
            HalfSpace { normal: vec![-e.sin(), e.cos()], offset: 0.0 },
        ]
    };
    if w <= PI {
        vec![wedge(start, end)]
    } else {
        let mid = start + 0.5 * w;
        vec![wedge(start, mid), wedge(mid, end)]
    }
}

/// m unit vectors with pairwise inner products -1/(m-1) and zero sum,
/// embedded in the first m-1 coordinates of R^d.
pub fn simplex_generators(m: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if m < 2 {
        return Err(Error::InvalidSpec("simplex needs at least two vertices".into()));
    }
    if m > d + 1 {
        return Err(Error::InvalidSpec(format!("{m} simplex vertices do not fit in dimension {d}")));
    }
    let scale = ((m - 1) as f64 / m as f64).sqrt();
    let mut out = vec![vec![0.0; d]; m];
    // Helmert basis of the hyperplane {sum = 0} in R^m.
    for k in 1..m {
        let c = ((k * (k + 1)) as f64).sqrt();
        for (i, z) in out.iter_mut().enumerate() {
            let v = if i < k {
                1.0 / c
            } else if i == k {
                -(k as f64) / c
            } else {
                0.0
            };
            z[k - 1] = v / scale;
        }
    }
    Ok(out)
}

/// An ordered list of cells covering R^d; points on shared boundaries
/// belong to the lowest-indexed cell that contains them.
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    dimension: usize,
    cells: Vec<SetSpec>,
}

impl PartitionSpec {
    pub fn new(dimension: usize, cells: Vec<SetSpec>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if cells.is_empty() {
            return Err(Error::InvalidSpec("partition needs at least one cell".into()));
        }
        for c in &cells {
            c.validate(dimension)?;
        }
        Ok(Self { dimension, cells })
    }

    pub fn simplex_cones(m: usize, d: usize) -> Result<Self> {
        Self::from_generators(simplex_generators(m, d)?, None)
    }

    /// Simplex cones with the first generator turned by `angle` radians in
    /// the plane of the first two coordinates. A partition that is not
    /// critical, for negative controls.
    pub fn perturbed_simplex_cones(m: usize, d: usize, angle: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidSpec("turning a generator needs dimension at least 2".into()));
        }
        let mut z = simplex_generators(m, d)?;
        let (c, s) = (angle.cos(), angle.sin());
        let (a, b) = (z[0][0], z[0][1]);
        z[0][0] = c * a - s * b;
        z[0][1] = s * a + c * b;
        Self::from_generators(z, None)
    }

    /// Max-affine cells `argmax_j <x, z_j> + b_j`.
    pub fn from_generators(generators: Vec<Vec<f64>>, offsets: Option<Vec<f64>>) -> Result<Self> {
        let m = generators.len();
        let offsets = offsets.unwrap_or_else(|| vec![0.0; m]);
        let d = generators.first().map(|z| z.len()).unwrap_or(0);
        let cells = (0..m)
            .map(|i| Cone::with_offsets(generators.clone(), offsets.clone(), i).map(SetSpec::Cone))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, cells)
    }

    /// `{<n, x> <= offset}` and its complement.
    pub fn half_spaces(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let d = normal.len();
        let h = SetSpec::half_space(normal, offset)?;
        Self::new(d, vec![h.clone(), h.complement()])
    }

    /// Planar sectors between consecutive angles; the last wraps around.
    pub fn sectors(angles: &[f64]) -> Result<Self> {
        if angles.len() < 2 || angles.windows(2).any(|w| w[1] < w[0]) || angles[angles.len() - 1] - angles[0] > 2.0 * PI {
            return Err(Error::InvalidSpec("sector angles must be increasing within one turn".into()));
        }
        let m = angles.len();
        let cells = (0..m)
            .map(|k| {
                let end = if k + 1 < m { angles[k + 1] } else { angles[0] + 2.0 * PI };
                SetSpec::Sector { start: angles[k], end }
            })
            .collect();
        Self::new(2, cells)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cells(&self) -> &[SetSpec] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.cells.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, cells: self.cells.len() })
        }
    }

    /// Lowest index of a cell containing `x`, or `None` if the cells leave a gap there.
    pub fn try_membership(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(x))
    }

    /// Cell index of `x`; a point claimed by no cell (a gap in a
    /// malformed partition) is assigned to the last cell.
    pub fn membership(&self, x: &[f64]) -> usize {
        self.try_membership(x).unwrap_or(self.cells.len() - 1)
    }

    pub fn cylinder_extend(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSpec("cylinder extension needs k >= 1".into()));
        }
        let cells = self
            .cells
            .iter()
            .map(|c| match c {
                SetSpec::Product { base, extra } => SetSpec::Product { base: base.clone(), extra: extra + k },
                _ => SetSpec::Product { base: Box::new(c.clone()), extra: k },
            })
            .collect();
        Self::new(self.dimension + k, cells)
    }

    pub fn transform(&self, t: &Transform) -> Result<Self> {
        let d = self.dimension;
        match t {
            Transform::Translate(v) => check_dim(v, d)?,
            Transform::Rotate(q) => {
                if q.len() != d || q.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch { expected: d, found: q.len() });
                }
            }
            _ => {}
        }
        Self::new(d, self.cells.iter().map(|c| c.transform(t, d)).collect())
    }

    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        self.transform(&Transform::Translate(v.to_vec()))
    }

    pub fn negate(&self) -> Self {
        self.transform(&Transform::Negate).expect("negation preserves validity")
    }

    /// Convex pieces of every cell, or `None` if any cell is an oracle.
    pub fn pieces(&self) -> Option<Vec<Vec<Vec<HalfSpace>>>> {
        self.cells.iter().map(|c| c.pieces(self.dimension)).collect()
    }

    /// Fraction of `n` seeded Gaussian points that some cell claims.
    pub fn coverage(&self, n: u64, seed: u64) -> f64 {
        let d = self.dimension;
        sample_mean(n, seed, |rng| {
            let mut x = vec![0.0; d];
            standard_normal(rng, &mut x);
            f64::from(u8::from(self.try_membership(&x).is_some()))
        })
        .value
    }

    /// Fraction of `n` seeded Gaussian points claimed by two or more cells.
    pub fn overlap(&self, n: u64, seed: u64) -> f64 {
        let d = self.dimension;
        sample_mean(n, seed, |rng| {
            let mut x = vec![0.0; d];
            standard_normal(rng, &mut x);
            f64::from(u8::from(self.cells.iter().filter(|c| c.contains(&x)).count() > 1))
        })
        .value
    }

    /// Rejects partitions that leave gaps or overlap on a set of positive
    /// measure, as seen by `n` seeded Gaussian points.
    pub fn check_cover(&self, n: u64, seed: u64) -> Result<()> {
        let gaps = 1.0 - self.coverage(n, seed);
        let overlap = self.overlap(n, seed);
        if gaps > 0.0 || overlap > 0.0 {
            return Err(Error::InvalidSpec(format!(
                "cells must cover R^{} without overlap: {:.3}% of probe points uncovered, {:.3}% claimed twice",
                self.dimension,
                100.0 * gaps,
                100.0 * overlap
            )));
        }
        Ok(())
    }
}

/// Gaussian measure of a single cell: closed form for half-spaces and
/// sectors, planar quadrature for polyhedral cells whose normals span at
/// most two directions, Monte Carlo otherwise.
pub fn gaussian_measure(s: &SetSpec, budget: &Budget) -> Result<Estimate> {
    let d = match s.dimension() {
        Some(d) => d,
        None => return Ok(Estimate::closed_form(1.0)),
    };
    if budget.mode != Mode::MonteCarlo {
        match s {
            SetSpec::HalfSpace(h) => return Ok(Estimate::closed_form(norm_cdf(h.offset))),
            SetSpec::Sector { start, end } => return Ok(Estimate::closed_form(((end - start) / (2.0 * PI)).min(1.0))),
            SetSpec::Product { base, .. } => return gaussian_measure(base, budget),
            SetSpec::Complement(b) => {
                let inner = gaussian_measure(b, budget)?;
                return Ok(Estimate { value: 1.0 - inner.value, ..inner });
            }
            _ => {}
        }
        if let Some(pieces) = s.pieces(d) {
            let normals: Vec<&[f64]> = pieces.iter().flatten().map(|h| h.normal.as_slice()).collect();
            if let Some(frame) = Frame::from_normals(d, &normals) {
                let planar = PlanarPartition::new(&frame, &[pieces]);
                let m = planar.cell_moments(0, [0.0, 0.0], 1.0);
                return Ok(Estimate::quadrature(m.m0, crate::planar::QUADRATURE_BOUND));
            }
        }
        if budget.mode == Mode::Quadrature {
            return Err(Error::Unsupported("quadrature needs polyhedral cells spanning at most two normal directions".into()));
        }
    }
    let n = budget.require_samples()?;
    Ok(sample_mean(n, budget.seed, |rng| {
        let mut x = vec![0.0; d];
        standard_normal(rng, &mut x);
        f64::from(u8::from(s.contains(&x)))
    }))
}

/// A uniformly random orthogonal matrix (rows), from Gram–Schmidt on a
/// Gaussian matrix.
pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v = vec![0.0; d];
        standard_normal(rng, &mut v);
        for _ in 0..2 {
            for r in &rows {
                let c = dot(&v, r);
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.iter().map(|a| a / n).collect());
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;

    #[test]
    fn simplex_vertices() {
        let z = simplex_generators(2, 1).unwrap();
        assert!((z[0][0] - 1.0).abs() < 1e-15 && (z[1][0] + 1.0).abs() < 1e-15);
        for (m, d) in [(3, 2), (4, 3), (3, 5), (5, 4)] {
            let z = simplex_generators(m, d).unwrap();
            for i in 0..m {
                assert!((dot(&z[i], &z[i]) - 1.0).abs() < 1e-14);
                for j in 0..i {
                    assert!((dot(&z[i], &z[j]) + 1.0 / (m as f64 - 1.0)).abs() < 1e-14);
                }
            }
            for k in 0..d {
                assert!(z.iter().map(|v| v[k]).sum::<f64>().abs() < 1e-12);
            }
        }
        assert!(simplex_generators(4, 2).is_err());
    }

    #[test]
    fn membership_examples() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let z = simplex_generators(3, 2).unwrap();
        for (i, zi) in z.iter().enumerate() {
            assert_eq!(p.membership(zi), i);
        }
        assert_eq!(p.membership(&[0.0, 0.0]), 0);
        let deg = PI / 180.0;
        let s = PartitionSpec::sectors(&[-60.0 * deg, 60.0 * deg, 180.0 * deg]).unwrap();
        assert_eq!(s.membership(&[0.0, 1.0]), 1);
        assert_eq!(s.membership(&[1.0, 0.0]), 0);
        assert_eq!(s.membership(&[-1.0, -0.1]), 2);
    }

    #[test]
    fn closed_form_measures() {
        let b = Budget::quadrature();
        let h = SetSpec::half_space(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(gaussian_measure(&h, &b).unwrap().value, 0.5);
        let s = SetSpec::Sector { start: 0.3, end: 0.3 + 2.0 * PI / 3.0 };
        assert!((gaussian_measure(&s, &b).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        for c in p.cells() {
            assert!((gaussian_measure(c, &b).unwrap().value - 1.0 / 3.0).abs() < 1e-11);
        }
    }

    #[test]
    fn complement_pieces_cover_the_rest() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let c = p.cells()[0].clone().complement();
        let b = Budget::quadrature();
        assert!((gaussian_measure(&SetSpec::Union(c.pieces(2).unwrap().into_iter().map(SetSpec::Cell).collect()), &b).unwrap().value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn cylinder_membership_ignores_extra_coordinates() {
        let p = PartitionSpec::half_spaces(vec![1.0], 0.3).unwrap();
        let q = p.cylinder_extend(2).unwrap();
        assert_eq!(q.dimension(), 3);
        for x in [-1.0, 0.2, 0.3, 0.31, 4.0] {
            assert_eq!(q.membership(&[x, 7.0, -3.0]), p.membership(&[x]));
        }
    }

    #[test]
    fn transforms_move_cells_consistently() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let t = [0.3, -0.2];
        let q = p.translate(&t).unwrap();
        let r = p.transform(&Transform::Rotate(random_rotation(2, &mut stream_rng(3, 0)))).unwrap();
        let mut rng = stream_rng(5, 1);
        for _ in 0..1000 {
            let mut x = vec![0.0; 2];
            standard_normal(&mut rng, &mut x);
            let y: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + b).collect();
            assert_eq!(q.membership(&y), p.membership(&x));
            assert_eq!(p.negate().membership(&[-x[0], -x[1]]), p.membership(&x));
            assert!(r.try_membership(&x).is_some());
        }
    }
}
