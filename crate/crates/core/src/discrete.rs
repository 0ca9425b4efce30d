//! Functions on `{0, ..., m-1}^n` with values in the simplex, the m-ary
//! noise operator, influences and plurality.
//!
//! A point `omega` is stored at index `sum_i omega_i m^i`, so voter 0 is
//! the fastest-varying coordinate.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Budget, Estimate};
use crate::gaussian::Correlation;
use crate::mc::sample_means;
use crate::partitions::PartitionSpec;
use crate::stability::partition_stability;

/// Largest table held in exact mode.
pub const MAX_TABLE: usize = 10_000_000;
const SIMPLEX_TOL: f64 = 1e-12;
/// Transition weights are rounded to this grid so that every partial sum
/// of a kernel row is exact.
const QUANTUM: f64 = 1.0 / (1u64 << 52) as f64;

fn table_size(m: usize, n: usize) -> Option<usize> {
    let mut size: usize = 1;
    for _ in 0..n {
        size = size.checked_mul(m)?;
        if size > MAX_TABLE {
            return None;
        }
    }
    Some(size)
}

/// Correlation of the m-ary noise: each voter keeps its value with
/// probability `(1 + (m-1) rho)/m` and otherwise moves to each other value
/// with probability `(1 - rho)/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseParameter {
    m: usize,
    rho: f64,
    stay: f64,
    step: f64,
}

impl NoiseParameter {
    pub fn new(m: usize, rho: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidSpec(format!("alphabet size {m} must be at least 2")));
        }
        let lo = -1.0 / (m as f64 - 1.0);
        if !(rho.is_finite() && rho > lo && rho < 1.0) {
            return Err(Error::InvalidCorrelation(rho));
        }
        let step = ((1.0 - rho) / m as f64 / QUANTUM).round() * QUANTUM;
        let stay = 1.0 - (m - 1) as f64 * step;
        Ok(Self { m, rho, stay, step })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn stay(&self) -> f64 {
        self.stay
    }

    /// Probability of moving to one particular other value.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Transition probabilities out of `from`.
    pub fn row(&self, from: usize) -> Vec<f64> {
        (0..self.m).map(|b| if b == from { self.stay } else { self.step }).collect()
    }
}

pub type Oracle = Arc<dyn Fn(&[usize]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Values {
    Table(Vec<f64>),
    Oracle(Oracle),
}

/// A map from `{0, ..., m-1}^n` to the simplex `Delta_m`.
#[derive(Clone)]
pub struct DiscreteFunction {
    m: usize,
    n: usize,
    values: Values,
}

impl std::fmt::Debug for DiscreteFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = if self.is_exact() { "table" } else { "oracle" };
        write!(f, "DiscreteFunction {{ m: {}, n: {}, {mode} }}", self.m, self.n)
    }
}

fn check_simplex(y: &[f64], m: usize) -> Result<()> {
    let ok = y.len() == m && y.iter().all(|v| v.is_finite() && *v >= -SIMPLEX_TOL) && (y.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("value {y:?} is not a point of the simplex")))
    }
}

fn decode(mut k: usize, m: usize, omega: &mut [usize]) {
    for w in omega.iter_mut() {
        *w = k % m;
        k /= m;
    }
}

impl DiscreteFunction {
    /// Evaluates `f` on every point and stores the results.
    pub fn tabulate<F: Fn(&[usize]) -> Vec<f64> + Sync>(m: usize, n: usize, f: F) -> Result<Self> {
        if m < 2 || n < 1 {
            return Err(Error::InvalidSpec(format!("need m >= 2 and n >= 1, got m = {m}, n = {n}")));
        }
        let size = table_size(m, n).ok_or_else(|| Error::SizeLimit(format!("{m}^{n} exceeds {MAX_TABLE} entries")))?;
        let rows: Vec<Result<Vec<f64>>> = (0..size)
            .into_par_iter()
            .map(|k| {
                let mut omega = vec![0; n];
                decode(k, m, &mut omega);
                let y = f(&omega);
                check_simplex(&y, m)?;
                Ok(y)
            })
            .collect();
        let mut values = Vec::with_capacity(size * m);
        for r in rows {
            values.extend(r?);
        }
        Ok(Self { m, n, values: Values::Table(values) })
    }

    /// Wraps a callback without tabulating; only Monte Carlo applies.
    /// Values are checked as they are drawn.
    pub fn oracle<F: Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static>(m: usize, n: usize, f: F) -> Result<Self> {
        if m < 2 || n < 1 {
            return Err(Error::InvalidSpec(format!("need m >= 2 and n >= 1, got m = {m}, n = {n}")));
        }
        Ok(Self { m, n, values: Values::Oracle(Arc::new(f)) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.values, Values::Table(_))
    }

    pub fn eval(&self, omega: &[usize]) -> Vec<f64> {
        match &self.values {
            Values::Table(t) => {
                let k = omega.iter().rev().fold(0, |acc, w| acc * self.m + w);
                t[k * self.m..(k + 1) * self.m].to_vec()
            }
            Values::Oracle(f) => f(omega),
        }
    }

    /// The scalar table of coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Result<Table> {
        if j >= self.m {
            return Err(Error::IndexOutOfRange { index: j, cells: self.m });
        }
        let Values::Table(t) = &self.values else {
            return Err(Error::SizeLimit("coordinate tables need exact mode".into()));
        };
        Ok(Table { m: self.m, n: self.n, values: t.iter().skip(j).step_by(self.m).copied().collect() })
    }

    /// Average value `E f` over the uniform measure.
    pub fn mean(&self) -> Result<Vec<f64>> {
        (0..self.m).map(|j| Ok(self.coordinate(j)?.mean())).collect()
    }
}

/// A real function on `{0, ..., m-1}^n`, stored as a full table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub m: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl Table {
    pub fn new(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        match table_size(m, n) {
            Some(s) if s == values.len() && m >= 2 => Ok(Self { m, n, values }),
            Some(s) => Err(Error::InvalidSpec(format!("expected {s} values, got {}", values.len()))),
            None => Err(Error::SizeLimit(format!("{m}^{n} exceeds {MAX_TABLE} entries"))),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Applies `h -> a h + b sum_{values of voter i} h` along voter `i`.
    fn along(&self, i: usize, a: f64, b: f64) -> Vec<f64> {
        let m = self.m;
        let stride = m.pow(i as u32);
        let block = stride * m;
        let mut out = vec![0.0; self.values.len()];
        out.par_chunks_mut(block).zip(self.values.par_chunks(block)).for_each(|(o, h)| {
            for s in 0..stride {
                let total: f64 = (0..m).map(|c| h[s + c * stride]).sum();
                for c in 0..m {
                    o[s + c * stride] = a * h[s + c * stride] + b * total;
                }
            }
        });
        out
    }

    /// The noise operator `E[g(delta) | omega]` applied to the table.
    pub fn noise(&self, rho: &NoiseParameter) -> Result<Table> {
        if rho.m != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: rho.m });
        }
        let mut t = self.clone();
        for i in 0..self.n {
            t.values = t.along(i, rho.stay - rho.step, rho.step);
        }
        Ok(t)
    }
}

/// `Inf_i(g) = E[(g - E_i g)^2]`, with `E_i` averaging over voter `i`.
pub fn influence(g: &Table, i: usize) -> Result<f64> {
    if i >= g.n {
        return Err(Error::IndexOutOfRange { index: i, cells: g.n });
    }
    let avg = g.along(i, 0.0, 1.0 / g.m as f64);
    Ok(g.values.iter().zip(&avg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / g.values.len() as f64)
}

/// `S_rho g = E[g(omega) g(delta)]` for one coordinate.
pub fn coordinate_noise_stability(g: &Table, rho: &NoiseParameter) -> Result<f64> {
    let t = g.noise(rho)?;
    Ok(g.values.iter().zip(&t.values).map(|(a, b)| a * b).sum::<f64>() / g.values.len() as f64)
}

/// `S_rho f = sum_j S_rho f_j`, exactly.
pub fn discrete_noise_stability(f: &DiscreteFunction, rho: &NoiseParameter) -> Result<f64> {
    if rho.m != f.m {
        return Err(Error::DimensionMismatch { expected: f.m, found: rho.m });
    }
    (0..f.m).map(|j| coordinate_noise_stability(&f.coordinate(j)?, rho)).sum()
}

/// Monte Carlo estimate of `S_rho f` from correlated pairs `(omega, delta)`.
pub fn discrete_noise_stability_mc(f: &DiscreteFunction, rho: &NoiseParameter, samples: u64, seed: u64) -> Result<Estimate> {
    if rho.m != f.m {
        return Err(Error::DimensionMismatch { expected: f.m, found: rho.m });
    }
    let budget = Budget::monte_carlo(samples, seed);
    budget.require_samples()?;
    let (m, n) = (f.m, f.n);
    let moved = 1.0 - rho.stay;
    let out = sample_means(samples, seed, 2, |rng, out| {
        let omega: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let delta: Vec<usize> = omega
            .iter()
            .map(|&w| {
                if rng.random::<f64>() < moved {
                    let b = rng.random_range(0..m - 1);
                    if b >= w {
                        b + 1
                    } else {
                        b
                    }
                } else {
                    w
                }
            })
            .collect();
        let (a, b) = (f.eval(&omega), f.eval(&delta));
        let ok = check_simplex(&a, m).is_ok() && check_simplex(&b, m).is_ok();
        out[0] = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        out[1] = if ok { 0.0 } else { 1.0 };
    });
    if out[1].value > 0.0 {
        return Err(Error::InvalidSpec("oracle returned a value outside the simplex".into()));
    }
    Ok(out[0])
}

/// `e_j` when `j` has strictly more votes than every other value, and the
/// uniform point `(1/m, ..., 1/m)` otherwise.
pub fn plurality_value(m: usize, omega: &[usize]) -> Vec<f64> {
    let mut counts = vec![0usize; m];
    omega.iter().for_each(|&w| counts[w] += 1);
    let top = *counts.iter().max().expect("m >= 1");
    let mut winners = counts.iter().enumerate().filter(|(_, c)| **c == top);
    let first = winners.next().expect("nonempty").0;
    if winners.next().is_some() {
        vec![1.0 / m as f64; m]
    } else {
        (0..m).map(|j| if j == first { 1.0 } else { 0.0 }).collect()
    }
}

/// Plurality on `n` voters, tabulated when `m^n` fits in exact mode.
pub fn plurality(m: usize, n: usize) -> Result<DiscreteFunction> {
    match table_size(m, n) {
        Some(_) => DiscreteFunction::tabulate(m, n, |w| plurality_value(m, w)),
        None => DiscreteFunction::oracle(m, n, move |w| plurality_value(m, w)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PluralityRow {
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    pub value: f64,
    pub std_error: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PluralityTable {
    pub rows: Vec<PluralityRow>,
    /// Stability of the `m` simplex cones in `R^{m-1}` at the same `rho`.
    pub simplex_cones: Estimate,
}

impl PluralityTable {
    /// CSV with columns `m,n,rho,value,std_error,method`. The continuous
    /// comparison is the last row, with `n` left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,n,rho,value,std_error,method\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{},{}\n", r.m, r.n, r.rho, r.value, r.std_error, r.method));
        }
        let c = &self.simplex_cones;
        let m = self.rows.first().map_or(0, |r| r.m);
        let rho = self.rows.first().map_or(0.0, |r| r.rho);
        s.push_str(&format!("{m},,{rho},{},{},simplex-cones\n", c.value, c.std_error));
        s
    }
}

/// `S_rho PLUR_{m,n}` for each `n`, exact when the table fits and Monte
/// Carlo with `samples` pairs otherwise.
pub fn plurality_stability_table(m: usize, rho: f64, ns: &[usize], samples: u64, seed: u64) -> Result<PluralityTable> {
    let noise = NoiseParameter::new(m, rho)?;
    let mut rows = Vec::with_capacity(ns.len());
    for (k, &n) in ns.iter().enumerate() {
        let f = plurality(m, n)?;
        let (value, std_error, method) = if f.is_exact() {
            (discrete_noise_stability(&f, &noise)?, 0.0, "exact")
        } else {
            let e = discrete_noise_stability_mc(&f, &noise, samples, seed.wrapping_add(k as u64))?;
            (e.value, e.std_error, "monte-carlo")
        };
        rows.push(PluralityRow { m, n, rho, value, std_error, method: method.into() });
    }
    let cones = PartitionSpec::simplex_cones(m, m - 1)?;
    let simplex_cones = partition_stability(&cones, Correlation::new(rho)?, &Budget::auto(samples, seed))?;
    Ok(PluralityTable { rows, simplex_cones })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn influence_of_a_coordinate_indicator() {
        let f = DiscreteFunction::tabulate(3, 2, |w| (0..3).map(|j| if w[0] == j { 1.0 } else { 0.0 }).collect()).unwrap();
        let g = f.coordinate(0).unwrap();
        assert!((influence(&g, 0).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(influence(&g, 1).unwrap(), 0.0);
        assert!(influence(&g, 2).is_err());
    }

    #[test]
    fn dictator_and_limits() {
        for rho in [-0.4, 0.0, 0.3, 0.8] {
            let noise = NoiseParameter::new(3, rho).unwrap();
            let f = plurality(3, 1).unwrap();
            let s = discrete_noise_stability(&f, &noise).unwrap();
            assert!((s - (1.0 + 2.0 * rho) / 3.0).abs() < 1e-15);
            let g = f.coordinate(0).unwrap();
            assert!((coordinate_noise_stability(&g, &noise).unwrap() - (1.0 + 2.0 * rho) / 9.0).abs() < 1e-15);
        }
        let f = plurality(3, 4).unwrap();
        let g = f.coordinate(1).unwrap();
        let s0 = coordinate_noise_stability(&g, &NoiseParameter::new(3, 0.0).unwrap()).unwrap();
        assert!((s0 - g.mean().powi(2)).abs() < 1e-15);
        let s1 = coordinate_noise_stability(&g, &NoiseParameter::new(3, 1.0 - 1e-9).unwrap()).unwrap();
        let sq = g.values.iter().map(|v| v * v).sum::<f64>() / g.values.len() as f64;
        assert!((s1 - sq).abs() < 1e-7);
    }

    #[test]
    fn kernel_rows_are_exact() {
        for m in 2..9 {
            for k in -9..100 {
                let rho = k as f64 / 100.0;
                let Ok(noise) = NoiseParameter::new(m, rho) else { continue };
                for a in 0..m {
                    assert_eq!(noise.row(a).iter().sum::<f64>(), 1.0);
                    assert!(noise.row(a).iter().all(|p| *p >= 0.0));
                }
            }
        }
        assert!(NoiseParameter::new(3, -0.5).is_err());
        assert!(NoiseParameter::new(3, -0.49).is_ok());
    }

    #[test]
    fn plurality_values() {
        assert_eq!(plurality_value(3, &[0, 0, 1]), vec![1.0, 0.0, 0.0]);
        assert_eq!(plurality_value(3, &[0, 1, 2]), vec![1.0 / 3.0; 3]);
        let f = plurality(3, 5).unwrap();
        for j in 0..3 {
            assert!((f.mean().unwrap()[j] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_matches_enumeration() {
        let noise = NoiseParameter::new(3, 0.4).unwrap();
        for n in [1, 3, 5] {
            let f = plurality(3, n).unwrap();
            let exact = discrete_noise_stability(&f, &noise).unwrap();
            let mc = discrete_noise_stability_mc(&f, &noise, 200_000, 9).unwrap();
            assert!(mc.agrees_with(exact, 4.0), "{n}: {exact} {mc:?}");
        }
        let flat = DiscreteFunction::oracle(4, 3, |_| vec![0.25; 4]).unwrap();
        let e = discrete_noise_stability_mc(&flat, &NoiseParameter::new(4, 0.2).unwrap(), 1000, 1).unwrap();
        assert!((e.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn table_at_zero_correlation() {
        let t = plurality_stability_table(3, 0.0, &[1, 2, 3, 4], 1000, 1).unwrap();
        for r in &t.rows {
            assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!(t.to_csv().starts_with("m,n,rho,value,std_error,method\n3,1,0,"));
    }
}
