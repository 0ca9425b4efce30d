//! Seeded, batch-parallel Monte Carlo with a fixed reduction order.
//!
//! Each batch draws from its own ChaCha stream derived from the root seed by
//! the batch index, so results do not depend on how rayon schedules work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::estimate::Estimate;

pub(crate) const BATCH: u64 = 8192;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; k], m2: vec![0.0; k] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * other.n / n;
            self.m2[k] += other.m2[k] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }
}

/// Runs `draw` once per sample, each call writing `k` statistics into the
/// buffer, and returns the mean of each statistic with its standard error.
pub fn sample_means<F>(samples: u64, seed: u64, k: usize, draw: F) -> Vec<Estimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b);
            let n = BATCH.min(samples - b * BATCH);
            let mut acc = Moments::new(k);
            let mut buf = vec![0.0; k];
            for _ in 0..n {
                buf.iter_mut().for_each(|v| *v = 0.0);
                draw(&mut rng, &mut buf);
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(k);
    for p in &parts {
        total.merge(p);
    }
    let n = total.n;
    (0..k)
        .map(|j| {
            let var = if n > 1.0 { total.m2[j] / (n - 1.0) } else { 0.0 };
            Estimate::monte_carlo(total.mean[j], (var / n).sqrt(), samples)
        })
        .collect()
}

pub fn sample_mean<F>(samples: u64, seed: u64, draw: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    sample_means(samples, seed, 1, |rng, out| out[0] = draw(rng))[0]
}
