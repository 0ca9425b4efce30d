//! Deterministic quadrature for polyhedral partitions whose facet normals
//! span at most two directions.
//!
//! Such a partition is a product of a planar partition (in the span `W` of
//! the normals) with the orthogonal complement, so every Gaussian integral
//! over a cell reduces to a planar polygon, and every facet to a segment or
//! ray times the complement. Polygon moments under `N(c, s^2 I)` are
//! computed in polar coordinates with the radial integrals in closed form.

use std::f64::consts::PI;

use crate::gaussian::{bivariate_normal_cdf, dot, norm, Correlation};
use crate::partitions::{HalfSpace, PartitionSpec, SetSpec};
use crate::quadrature::{gauss_hermite, gaussian_breaks, integrate, integrate_vec};
use crate::special::{half_exp, norm_interval, norm_pdf, norm_pdf_scaled, x_exp, SQRT_2PI, TWO_PI};

/// Radius (in standard deviations) beyond which integrands are dropped.
pub const RADIUS: f64 = 40.0;
const MOMENT_TOL: f64 = 1e-14;
/// Error bound reported for values produced by this engine.
pub const QUADRATURE_BOUND: f64 = 1e-10;
/// Error bound reported for `bilinear_planar`.
pub const PAIR_BOUND: f64 = 1e-12;

/// Orthonormal coordinates adapted to a set of normals: up to two in-plane
/// axes (a missing axis when d = 1 acts as a free dummy coordinate) and an
/// orthonormal basis of the remaining directions.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    d: usize,
    axes: [Option<Vec<f64>>; 2],
    orth: Vec<Vec<f64>>,
}

fn residual(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    r
}

impl Frame {
    /// `None` when the normals span more than two directions.
    pub fn from_normals(d: usize, normals: &[&[f64]]) -> Option<Frame> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for n in normals {
            let r = residual(n, &basis);
            let len = norm(&r);
            if len > 1e-10 * norm(n).max(1.0) {
                if basis.len() == 2 {
                    return None;
                }
                basis.push(r.iter().map(|x| x / len).collect());
            }
        }
        let mut k = 0;
        while basis.len() < d.min(2) {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            let r = residual(&e, &basis);
            let len = norm(&r);
            if len > 0.5 {
                basis.push(r.iter().map(|x| x / len).collect());
            }
            k += 1;
        }
        let mut orth = Vec::new();
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            let all: Vec<Vec<f64>> = basis.iter().chain(orth.iter()).cloned().collect();
            let r = residual(&e, &all);
            let len = norm(&r);
            if len > 0.5 && basis.len() + orth.len() < d {
                orth.push(r.iter().map(|x| x / len).collect());
            }
        }
        let mut it = basis.into_iter();
        Some(Frame { d, axes: [it.next(), it.next()], orth })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn orth_dim(&self) -> usize {
        self.orth.len()
    }

    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let c = |a: &Option<Vec<f64>>| a.as_ref().map(|b| dot(b, x)).unwrap_or(0.0);
        [c(&self.axes[0]), c(&self.axes[1])]
    }

    pub fn orth_coords(&self, x: &[f64]) -> Vec<f64> {
        self.orth.iter().map(|b| dot(b, x)).collect()
    }

    pub fn lift(&self, w: [f64; 2], o: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for (k, axis) in self.axes.iter().enumerate() {
            if let Some(b) = axis {
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += w[k] * bi);
            }
        }
        for (c, b) in o.iter().zip(&self.orth) {
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += c * bi);
        }
        x
    }

    pub fn lift_dir(&self, a: [f64; 2]) -> Vec<f64> {
        self.lift(a, &[])
    }

    fn line(&self, h: &HalfSpace) -> Line {
        let a = self.project(&h.normal);
        let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
        Line { a: [a[0] / n, a[1] / n], t: h.offset / n }
    }
}

/// The half-plane `<a, w> <= t` with `|a| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Line {
    pub a: [f64; 2],
    pub t: f64,
}

pub(crate) type Polygon = Vec<Line>;

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn polygon_contains(poly: &[Line], w: [f64; 2]) -> bool {
    poly.iter().all(|l| dot2(l.a, w) <= l.t)
}

/// `E[(1, Z, |Z|^2) 1{c + s Z in P}]` for planar standard normal `Z`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub m0: f64,
    pub m1: [f64; 2],
    pub m2: f64,
}

impl Moments {
    fn add(&mut self, o: &Moments) {
        self.m0 += o.m0;
        self.m1[0] += o.m1[0];
        self.m1[1] += o.m1[1];
        self.m2 += o.m2;
    }
}

/// Radial range `{r >= 0 : r e in P}` for a polygon in standardized form.
fn radial_range(lines: &[([f64; 2], f64)], e: [f64; 2]) -> Option<(f64, f64)> {
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for &(a, tau) in lines {
        let d = dot2(a, e);
        if d > 0.0 {
            hi = hi.min(tau / d);
        } else if d < 0.0 {
            lo = lo.max(tau / d);
        } else if tau < 0.0 {
            return None;
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Angles at which the radial range of the polygon changes its formula.
fn polar_breaks(lines: &[([f64; 2], f64)]) -> Vec<f64> {
    let mut th = vec![0.0, TWO_PI];
    let mut push = |t: f64| th.push(t.rem_euclid(TWO_PI));
    for &(a, _) in lines {
        let al = a[1].atan2(a[0]);
        push(al + 0.5 * PI);
        push(al - 0.5 * PI);
    }
    for (k, &(a, s)) in lines.iter().enumerate() {
        for &(b, t) in &lines[k + 1..] {
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-14 {
                continue;
            }
            let v = [(s * b[1] - t * a[1]) / det, (a[0] * t - b[0] * s) / det];
            if v[0].abs() + v[1].abs() > 1e-300 {
                push(v[1].atan2(v[0]));
            }
        }
    }
    th.sort_by(f64::total_cmp);
    th.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    th
}

fn standardize(poly: &[Line], c: [f64; 2], s: f64) -> Vec<([f64; 2], f64)> {
    poly.iter().map(|l| (l.a, (l.t - dot2(l.a, c)) / s)).collect()
}

pub(crate) fn polygon_moments(poly: &[Line], c: [f64; 2], s: f64) -> Moments {
    let lines = standardize(poly, c, s);
    match lines.len() {
        0 => Moments { m0: 1.0, m1: [0.0, 0.0], m2: 2.0 },
        1 => {
            let (a, tau) = lines[0];
            let phi = norm_pdf(tau);
            let cdf = norm_interval(f64::NEG_INFINITY, tau);
            Moments { m0: cdf, m1: [-phi * a[0], -phi * a[1]], m2: 2.0 * cdf - tau * phi }
        }
        _ => {
            let th = polar_breaks(&lines);
            let r = integrate_vec(
                |t: f64| {
                    let e = [t.cos(), t.sin()];
                    match radial_range(&lines, e) {
                        None => [0.0; 4],
                        Some((lo, hi)) => {
                            let (elo, ehi) = (half_exp(lo), half_exp(hi));
                            let r0 = elo - ehi;
                            let r1 = SQRT_2PI * norm_interval(lo, hi) + x_exp(lo) - x_exp(hi);
                            let r2 = (lo * lo + 2.0) * elo - if hi.is_finite() { (hi * hi + 2.0) * ehi } else { 0.0 };
                            [r0, e[0] * r1, e[1] * r1, r2]
                        }
                    }
                },
                &th,
                MOMENT_TOL,
            );
            let v = r.value;
            Moments { m0: v[0] / TWO_PI, m1: [v[1] / TWO_PI, v[2] / TWO_PI], m2: v[3] / TWO_PI }
        }
    }
}

/// Gaussian mass of a polygon under `N(c, s^2 I)`.
pub(crate) fn polygon_mass(poly: &[Line], c: [f64; 2], s: f64) -> f64 {
    let lines = standardize(poly, c, s);
    match lines.len() {
        0 => 1.0,
        1 => norm_interval(f64::NEG_INFINITY, lines[0].1),
        _ => {
            let th = polar_breaks(&lines);
            let (v, _) = integrate(
                |t: f64| match radial_range(&lines, [t.cos(), t.sin()]) {
                    None => 0.0,
                    Some((lo, hi)) => half_exp(lo) - half_exp(hi),
                },
                &th,
                MOMENT_TOL,
            );
            v / TWO_PI
        }
    }
}

/// A maximal segment (or ray, or line) of an interface in the plane:
/// points `t a + lambda a_perp` for `lambda in [lo, hi]`, with `a` the unit
/// normal pointing from cell `from` into cell `to`, and `from < to`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Facet {
    pub from: usize,
    pub to: usize,
    pub a: [f64; 2],
    pub t: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Facet {
    pub fn tangent(&self) -> [f64; 2] {
        [-self.a[1], self.a[0]]
    }

    pub fn point(&self, lambda: f64) -> [f64; 2] {
        let u = self.tangent();
        [self.t * self.a[0] + lambda * u[0], self.t * self.a[1] + lambda * u[1]]
    }

    /// Sign of this facet in the boundary of cell `c` (exterior normal = sign * a).
    pub fn sign(&self, c: usize) -> f64 {
        if c == self.from {
            1.0
        } else if c == self.to {
            -1.0
        } else {
            0.0
        }
    }
}

/// Planar image of a polyhedral partition in a given frame.
#[derive(Debug, Clone)]
pub(crate) struct PlanarPartition {
    pub cells: Vec<Vec<Polygon>>,
    pub facets: Vec<Facet>,
}

impl PlanarPartition {
    pub fn new(frame: &Frame, pieces: &[Vec<Vec<HalfSpace>>]) -> Self {
        let cells: Vec<Vec<Polygon>> = pieces
            .iter()
            .map(|cell| cell.iter().map(|p| p.iter().map(|h| frame.line(h)).collect()).collect())
            .collect();
        let mut out = PlanarPartition { cells, facets: Vec::new() };
        out.facets = out.build_facets();
        out
    }

    pub fn cell_at(&self, w: [f64; 2]) -> Option<usize> {
        self.cells.iter().position(|cell| cell.iter().any(|p| polygon_contains(p, w)))
    }

    fn build_facets(&self) -> Vec<Facet> {
        let all: Vec<Line> = self.cells.iter().flatten().flatten().copied().collect();
        let mut facets = Vec::new();
        for (i, cell) in self.cells.iter().enumerate() {
            for poly in cell {
                for (k, l) in poly.iter().enumerate() {
                    if poly[..k].iter().any(|m| (m.a[0] - l.a[0]).abs() + (m.a[1] - l.a[1]).abs() + (m.t - l.t).abs() < 1e-14) {
                        continue;
                    }
                    let u = [-l.a[1], l.a[0]];
                    let p0 = [l.t * l.a[0], l.t * l.a[1]];
                    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                    let mut empty = false;
                    for (j, m) in poly.iter().enumerate() {
                        if j == k {
                            continue;
                        }
                        let du = dot2(m.a, u);
                        let rhs = m.t - dot2(m.a, p0);
                        if du.abs() < 1e-14 {
                            if rhs < -1e-14 {
                                empty = true;
                            }
                        } else if du > 0.0 {
                            hi = hi.min(rhs / du);
                        } else {
                            lo = lo.max(rhs / du);
                        }
                    }
                    if empty || hi <= lo + 1e-14 {
                        continue;
                    }
                    let mut cuts = vec![lo, hi];
                    for m in &all {
                        let du = dot2(m.a, u);
                        if du.abs() > 1e-14 {
                            let x = (m.t - dot2(m.a, p0)) / du;
                            if x > lo + 1e-12 && x < hi - 1e-12 {
                                cuts.push(x);
                            }
                        }
                    }
                    cuts.sort_by(f64::total_cmp);
                    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                    for w in cuts.windows(2) {
                        let mid = match (w[0].is_finite(), w[1].is_finite()) {
                            (true, true) => 0.5 * (w[0] + w[1]),
                            (true, false) => w[0] + 1.0,
                            (false, true) => w[1] - 1.0,
                            (false, false) => 0.0,
                        };
                        let q = [p0[0] + mid * u[0], p0[1] + mid * u[1]];
                        let eps = 1e-7 * (1.0 + q[0].abs() + q[1].abs());
                        let inside = self.cell_at([q[0] - eps * l.a[0], q[1] - eps * l.a[1]]);
                        let outside = self.cell_at([q[0] + eps * l.a[0], q[1] + eps * l.a[1]]);
                        if inside != Some(i) {
                            continue;
                        }
                        if let Some(j) = outside {
                            if j > i {
                                facets.push(Facet { from: i, to: j, a: l.a, t: l.t, lo: w[0], hi: w[1] });
                            }
                        }
                    }
                }
            }
        }
        facets
    }

    pub fn cell_moments(&self, i: usize, c: [f64; 2], s: f64) -> Moments {
        let mut m = Moments::default();
        for p in &self.cells[i] {
            m.add(&polygon_moments(p, c, s));
        }
        m
    }

    pub fn cell_mass(&self, i: usize, c: [f64; 2], s: f64) -> f64 {
        self.cells[i].iter().map(|p| polygon_mass(p, c, s)).sum()
    }
}

/// A partition together with the frame in which it is planar, with the
/// Ornstein–Uhlenbeck quantities of its cells at a point.
#[derive(Debug, Clone)]
pub(crate) struct Planar {
    pub frame: Frame,
    pub part: PlanarPartition,
}

fn collect_normals<'a>(pieces: impl Iterator<Item = &'a Vec<Vec<HalfSpace>>>) -> Vec<&'a [f64]> {
    pieces.flat_map(|c| c.iter().flatten().map(|h| h.normal.as_slice())).collect()
}

impl Planar {
    pub fn of_partition(p: &PartitionSpec) -> Option<Self> {
        let pieces = p.pieces()?;
        let frame = Frame::from_normals(p.dimension(), &collect_normals(pieces.iter()))?;
        let part = PlanarPartition::new(&frame, &pieces);
        Some(Self { frame, part })
    }

    /// Two partitions expressed in one common frame.
    pub fn of_pair(p: &PartitionSpec, q: &PartitionSpec) -> Option<(Self, Self)> {
        let (a, b) = (p.pieces()?, q.pieces()?);
        let frame = Frame::from_normals(p.dimension(), &collect_normals(a.iter().chain(b.iter())))?;
        let pa = PlanarPartition::new(&frame, &a);
        let pb = PlanarPartition::new(&frame, &b);
        Some((Self { frame: frame.clone(), part: pa }, Self { frame, part: pb }))
    }

    /// A single set as the only cell.
    pub fn of_set(s: &SetSpec, d: usize) -> Option<Self> {
        let pieces = vec![s.pieces(d)?];
        let frame = Frame::from_normals(d, &collect_normals(pieces.iter()))?;
        let part = PlanarPartition::new(&frame, &pieces);
        Some(Self { frame, part })
    }

    fn center(&self, x: &[f64], rho: f64) -> [f64; 2] {
        let w = self.frame.project(x);
        [rho * w[0], rho * w[1]]
    }

    /// `T_rho 1_{cell i}(x)`.
    pub fn t_cell(&self, i: usize, x: &[f64], rho: f64) -> f64 {
        self.part.cell_mass(i, self.center(x, rho), (1.0 - rho * rho).sqrt())
    }

    /// Moments of `Z` on `{rho x + sigma Z in cell i}`, planar part only.
    pub fn t_moments(&self, i: usize, x: &[f64], rho: f64) -> Moments {
        self.part.cell_moments(i, self.center(x, rho), (1.0 - rho * rho).sqrt())
    }

    pub fn grad(&self, i: usize, x: &[f64], rho: f64) -> Vec<f64> {
        let m = self.t_moments(i, x, rho);
        let k = rho / (1.0 - rho * rho).sqrt();
        self.frame.lift_dir([k * m.m1[0], k * m.m1[1]])
    }

    /// Directions orthogonal to the plane leave the cell unchanged, so only
    /// the two planar coordinates contribute `E[(Z_k^2 - 1) 1]`.
    pub fn laplacian(&self, i: usize, x: &[f64], rho: f64) -> f64 {
        let m = self.t_moments(i, x, rho);
        rho * rho / (1.0 - rho * rho) * (m.m2 - 2.0 * m.m0)
    }

    /// `d/d rho T_rho 1_{cell i}(x) = (-Delta T + <x, grad T>) / rho`.
    pub fn rho_derivative(&self, i: usize, x: &[f64], rho: f64) -> f64 {
        let m = self.t_moments(i, x, rho);
        let sigma = (1.0 - rho * rho).sqrt();
        let w = self.frame.project(x);
        let lap = self.laplacian(i, x, rho);
        let radial = rho / sigma * (w[0] * m.m1[0] + w[1] * m.m1[1]);
        (radial - lap) / rho
    }
}

/// `sum_i P(X in P_i, Y in Q_i)` for planar standard normals with
/// correlation `rho`.
pub(crate) fn bilinear_planar(p: &PlanarPartition, q: &PlanarPartition, rho: f64) -> f64 {
    p.cells
        .iter()
        .zip(&q.cells)
        .flat_map(|(a, b)| a.iter().flat_map(move |x| b.iter().map(move |y| (x, y))))
        .map(|(x, y)| pair_probability(x, y, rho))
        .sum()
}

/// A piece of the boundary of a convex polygon: `t a + lambda u` for
/// `lambda in [lo, hi]`, with `a` the exterior normal and `u = a_perp`.
#[derive(Debug, Clone, Copy)]
struct Edge {
    a: [f64; 2],
    base: [f64; 2],
    u: [f64; 2],
    lo: f64,
    hi: f64,
}

fn polygon_edges(poly: &[Line]) -> Vec<Edge> {
    let mut out = Vec::new();
    'lines: for (k, l) in poly.iter().enumerate() {
        let u = [-l.a[1], l.a[0]];
        let base = [l.t * l.a[0], l.t * l.a[1]];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (j, m) in poly.iter().enumerate() {
            if j == k {
                continue;
            }
            let same = (m.a[0] - l.a[0]).abs() < 1e-14 && (m.a[1] - l.a[1]).abs() < 1e-14 && (m.t - l.t).abs() < 1e-14;
            if same {
                if j < k {
                    continue 'lines;
                }
                continue;
            }
            let slope = dot2(m.a, u);
            let room = m.t - dot2(m.a, base);
            if slope.abs() < 1e-15 {
                if room < 0.0 {
                    continue 'lines;
                }
            } else if slope > 0.0 {
                hi = hi.min(room / slope);
            } else {
                lo = lo.max(room / slope);
            }
        }
        if lo < hi {
            out.push(Edge { a: l.a, base, u, lo, hi });
        }
    }
    out
}

/// `int_e int_f phi_t(x, y)` over two edges, where `phi_t` is the density
/// of a pair of planar standard normals with correlation `t`. On the pair
/// of lines the density is a bivariate Gaussian in the edge parameters, so
/// the integral is a rectangle probability.
fn edge_pair_density(e: &Edge, f: &Edge, t: f64) -> f64 {
    let one = 1.0 - t * t;
    let c = dot2(e.u, f.u);
    let alpha = dot2(e.u, f.base);
    let beta = dot2(e.base, f.u);
    let k = dot2(e.base, e.base) + dot2(f.base, f.base) - 2.0 * t * dot2(e.base, f.base);
    let r = t * c;
    let den = 1.0 - r * r;
    let s = (one / den).sqrt();
    let m1 = t * (alpha + r * beta) / den;
    let m2 = t * (beta + r * alpha) / den;
    let expo = -0.5 * (k - t * (alpha * m1 + beta * m2)) / one;
    let corr = Correlation::new(r).expect("|t c| < 1");
    let cdf = |x: f64, y: f64| bivariate_normal_cdf(x, y, corr);
    let (x0, x1) = ((e.lo - m1) / s, (e.hi - m1) / s);
    let (y0, y1) = ((f.lo - m2) / s, (f.hi - m2) / s);
    let rect = cdf(x1, y1) - cdf(x0, y1) - cdf(x1, y0) + cdf(x0, y0);
    expo.exp() * s * s * den.sqrt() * rect / (TWO_PI * one)
}

/// `P(X in A, Y in B)` for convex polygons, from
/// `d/dt P = int_{dA} int_{dB} <n_A, n_B> phi_t` integrated up from the
/// independent value at `t = 0`.
pub(crate) fn pair_probability(a: &[Line], b: &[Line], rho: f64) -> f64 {
    let base = polygon_mass(a, [0.0, 0.0], 1.0) * polygon_mass(b, [0.0, 0.0], 1.0);
    let (ea, eb) = (polygon_edges(a), polygon_edges(b));
    if rho == 0.0 || ea.is_empty() || eb.is_empty() {
        return base;
    }
    let pairs: Vec<(f64, &Edge, &Edge)> = ea
        .iter()
        .flat_map(|e| eb.iter().map(move |f| (dot2(e.a, f.a), e, f)))
        .filter(|(w, _, _)| *w != 0.0)
        .collect();
    let g = |t: f64| pairs.iter().map(|(w, e, f)| w * edge_pair_density(e, f, t)).sum::<f64>();
    let (lo, hi) = if rho > 0.0 { (0.0, rho) } else { (rho, 0.0) };
    let pts: Vec<f64> = (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect();
    let (v, _) = integrate(g, &pts, 1e-14);
    if rho > 0.0 {
        base + v
    } else {
        base - v
    }
}

#[cfg(test)]
fn bilinear_planar_radial(p: &PlanarPartition, q: &PlanarPartition, rho: f64) -> f64 {
    let sigma = (1.0 - rho * rho).sqrt();
    let jobs: Vec<(usize, &Polygon)> = p.cells.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |poly| (i, poly))).collect();
    jobs.iter()
        .map(|&(i, poly)| {
            let lines = standardize(poly, [0.0, 0.0], 1.0);
            let th = polar_breaks(&lines);
            let (v, _) = integrate(
                |t: f64| {
                    let e = [t.cos(), t.sin()];
                    let Some((lo, hi)) = radial_range(&lines, e) else { return 0.0 };
                    let hi = hi.min(RADIUS);
                    if hi <= lo {
                        return 0.0;
                    }
                    let pts = gaussian_breaks(lo, hi, 0.0, 1.0, RADIUS);
                    let (r, _) = integrate(
                        |r: f64| {
                            let c = [rho * r * e[0], rho * r * e[1]];
                            r * (-0.5 * r * r).exp() * q.cell_mass(i, c, sigma)
                        },
                        &pts,
                        1e-14,
                    );
                    r
                },
                &th,
                1e-12,
            );
            v / TWO_PI
        })
        .sum()
}

/// Gauss–Hermite tensor grid over the orthogonal complement.
pub(crate) fn orth_grid(k: usize) -> Vec<(Vec<f64>, f64)> {
    if k == 0 {
        return vec![(vec![], 1.0)];
    }
    let n = if k <= 2 { 8 } else { 4 };
    let (x, w) = gauss_hermite(n);
    let mut grid = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        let mut next = Vec::with_capacity(grid.len() * n);
        for (p, wp) in &grid {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                next.push((q, wp * wi));
            }
        }
        grid = next;
    }
    grid
}

/// `int_F g(y) gamma_d(y) dy` over a facet times the orthogonal complement.
/// `g` receives the point in R^d. If `orth` is false, `g` is assumed not
/// to depend on the orthogonal coordinates.
pub(crate) fn facet_gamma_integral<G: Fn(&[f64]) -> f64>(frame: &Frame, f: &Facet, orth: bool, g: G) -> (f64, f64) {
    let grid = orth_grid(if orth { frame.orth_dim() } else { 0 });
    let zero = vec![0.0; frame.orth_dim()];
    let pts = gaussian_breaks(f.lo, f.hi, 0.0, 1.0, RADIUS);
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let (v, e) = integrate(
        |lam| {
            let w = f.point(lam);
            let inner: f64 = if orth {
                grid.iter().map(|(o, wt)| wt * g(&frame.lift(w, o))).sum()
            } else {
                g(&frame.lift(w, &zero))
            };
            norm_pdf(lam) * inner
        },
        &pts,
        1e-13,
    );
    let pref = norm_pdf(f.t);
    (pref * v, pref * e)
}

/// `c_rho int_F g(y) exp(-|y - rho x|^2 / (2 sigma^2)) dy` over a facet,
/// with `c_rho = (2 pi sigma^2)^(-d/2)`. A `constant` value skips the
/// tangential quadrature.
pub(crate) fn facet_kernel_integral<G: Fn(&[f64]) -> f64>(
    frame: &Frame,
    f: &Facet,
    x: &[f64],
    rho: f64,
    constant: Option<f64>,
    orth: bool,
    g: G,
) -> f64 {
    let sigma = (1.0 - rho * rho).sqrt();
    let xw = frame.project(x);
    let mu = [rho * xw[0], rho * xw[1]];
    let delta = f.t - dot2(f.a, mu);
    let lam0 = dot2(f.tangent(), mu);
    let pref = norm_pdf_scaled(delta, sigma);
    if let Some(c) = constant {
        return pref * c * norm_interval((f.lo - lam0) / sigma, (f.hi - lam0) / sigma);
    }
    let xo: Vec<f64> = frame.orth_coords(x).iter().map(|v| rho * v).collect();
    let grid = orth_grid(if orth { frame.orth_dim() } else { 0 });
    let pts = gaussian_breaks(f.lo, f.hi, lam0, sigma, RADIUS);
    if pts.len() < 2 {
        return 0.0;
    }
    let (v, _) = integrate(
        |lam| {
            let w = f.point(lam);
            let inner: f64 = if orth {
                grid.iter()
                    .map(|(z, wt)| {
                        let o: Vec<f64> = xo.iter().zip(z).map(|(m, zi)| m + sigma * zi).collect();
                        wt * g(&frame.lift(w, &o))
                    })
                    .sum()
            } else {
                g(&frame.lift(w, &xo))
            };
            norm_pdf_scaled(lam - lam0, sigma) * inner
        },
        &pts,
        1e-14,
    );
    pref * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::PartitionSpec;
    use crate::special::norm_cdf;

    fn planar(p: &PartitionSpec) -> (Frame, PlanarPartition) {
        let pieces = p.pieces().unwrap();
        let normals: Vec<&[f64]> = pieces.iter().flatten().flatten().map(|h| h.normal.as_slice()).collect();
        let frame = Frame::from_normals(p.dimension(), &normals).unwrap();
        let pp = PlanarPartition::new(&frame, &pieces);
        (frame, pp)
    }

    #[test]
    fn edge_reduction_matches_radial_integration() {
        let cases = [
            PartitionSpec::simplex_cones(3, 2).unwrap(),
            PartitionSpec::perturbed_simplex_cones(3, 2, 0.1).unwrap().translate(&[0.3, -0.2]).unwrap(),
            PartitionSpec::sectors(&[0.0, 0.5, 4.5]).unwrap(),
            PartitionSpec::half_spaces(vec![0.6, 0.8], 0.4).unwrap(),
        ];
        for (p, rho) in cases.iter().zip([0.9, 0.3, -0.6, 0.5]) {
            let (_, pp) = planar(p);
            {
                let a = bilinear_planar(&pp, &pp, rho);
                let b = bilinear_planar_radial(&pp, &pp, rho);
                assert!((a - b).abs() < 1e-11, "{rho}: {a} {b}");
            }
        }
    }

    #[test]
    fn quadrant_pair_matches_orthant_formula() {
        // Independent coordinates: P = P(X1 <= 0, Y1 <= 0)^2 = (1/4 + asin(rho)/(2 pi))^2.
        let q = vec![Line { a: [1.0, 0.0], t: 0.0 }, Line { a: [0.0, 1.0], t: 0.0 }];
        for rho in [0.2, 0.7, -0.5] {
            let one = 0.25 + f64::asin(rho) / TWO_PI;
            assert!((pair_probability(&q, &q, rho) - one * one).abs() < 1e-14);
        }
    }

    #[test]
    fn wedge_moments_match_closed_forms() {
        // Quadrant {x <= 0, y <= 0} under N(c, s^2): product of 1-d laws.
        let poly = vec![Line { a: [1.0, 0.0], t: 0.0 }, Line { a: [0.0, 1.0], t: 0.0 }];
        let (c, s) = ([0.3, -0.4], 0.8);
        let m = polygon_moments(&poly, c, s);
        let (u, v) = (-c[0] / s, -c[1] / s);
        let (pu, pv) = (norm_cdf(u), norm_cdf(v));
        assert!((m.m0 - pu * pv).abs() < 1e-14);
        assert!((m.m1[0] + norm_pdf(u) * pv).abs() < 1e-14);
        assert!((m.m1[1] + norm_pdf(v) * pu).abs() < 1e-14);
        let e2 = |t: f64| norm_cdf(t) - t * norm_pdf(t);
        assert!((m.m2 - (e2(u) * pv + e2(v) * pu)).abs() < 1e-13);
        assert!((polygon_mass(&poly, c, s) - m.m0).abs() < 1e-15);
    }

    #[test]
    fn triangle_mass_is_additive() {
        let tri = vec![
            Line { a: [0.0, -1.0], t: 0.5 },
            Line { a: [1.0, 0.0], t: 1.0 },
            Line { a: [-0.6, 0.8], t: 0.2 },
        ];
        let mut cut_a = tri.clone();
        cut_a.push(Line { a: [1.0, 0.0], t: 0.1 });
        let mut cut_b = tri.clone();
        cut_b.push(Line { a: [-1.0, 0.0], t: -0.1 });
        let c = [0.2, 0.1];
        let whole = polygon_moments(&tri, c, 0.7);
        let a = polygon_moments(&cut_a, c, 0.7);
        let b = polygon_moments(&cut_b, c, 0.7);
        assert!((whole.m0 - a.m0 - b.m0).abs() < 1e-14);
        assert!((whole.m2 - a.m2 - b.m2).abs() < 1e-13);
    }

    #[test]
    fn simplex_facets_are_rays() {
        let p = PartitionSpec::simplex_cones(3, 2).unwrap();
        let (_, pp) = planar(&p);
        assert_eq!(pp.facets.len(), 3);
        for f in &pp.facets {
            assert!(f.t.abs() < 1e-15);
            assert!(f.lo.is_finite() != f.hi.is_finite());
        }
    }

    #[test]
    fn facet_mass_of_a_line() {
        let p = PartitionSpec::half_spaces(vec![1.0, 0.0, 0.0], 0.5).unwrap();
        let (frame, pp) = planar(&p);
        assert_eq!(pp.facets.len(), 1);
        let (v, _) = facet_gamma_integral(&frame, &pp.facets[0], true, |_| 1.0);
        assert!((v - norm_pdf(0.5)).abs() < 1e-13);
    }

    #[test]
    fn one_dimensional_frame_uses_a_dummy_axis() {
        let p = PartitionSpec::half_spaces(vec![1.0], 0.0).unwrap();
        let (frame, pp) = planar(&p);
        assert_eq!(frame.orth_dim(), 0);
        assert_eq!(pp.facets.len(), 1);
        let (v, _) = facet_gamma_integral(&frame, &pp.facets[0], false, |_| 1.0);
        assert!((v - norm_pdf(0.0)).abs() < 1e-13);
        let stab = bilinear_planar(&pp, &pp, 0.5);
        assert!((stab - 2.0 / 3.0).abs() < 1e-11, "{stab}");
    }
}
