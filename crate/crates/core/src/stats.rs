//! Monte Carlo bookkeeping: Welford accumulators, estimates and the
//! deterministic parallel replicate runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Running mean and second central moment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// A Monte Carlo estimate together with what is needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub master_seed: u64,
    /// Natural log of `mean`, exact even when `mean` overflows.
    pub log_mean: f64,
    /// Set when some replicate exceeded `exp(700)`.
    pub overflow: bool,
}

impl McEstimate {
    pub fn from_values(values: &[f64], master_seed: u64) -> Self {
        let w: Welford = values.iter().copied().collect();
        McEstimate {
            mean: w.mean(),
            stderr: w.stderr(),
            n: w.count(),
            master_seed,
            log_mean: w.mean().ln(),
            overflow: false,
        }
    }

    /// Summarise replicates given as natural logs. Values are rescaled by the
    /// largest replicate when it exceeds 1, so huge weights stay representable.
    pub fn from_log_values(logs: &[f64], master_seed: u64) -> Self {
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m <= 0.0 || !m.is_finite() {
            let values: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
            return Self::from_values(&values, master_seed);
        }
        let w: Welford = logs.iter().map(|l| (l - m).exp()).collect();
        let scale = m.exp();
        McEstimate {
            mean: w.mean() * scale,
            stderr: w.stderr() * scale,
            n: w.count(),
            master_seed,
            log_mean: m + w.mean().ln(),
            overflow: m > 700.0,
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Run `n` replicates of `f` on `workers` threads (0 = rayon default).
///
/// Replicate `i` receives substream `(master_seed, i)`; results come back in
/// index order, so downstream reductions are bit-identical for any `workers`.
pub fn run_replicates<T, F>(n: usize, master_seed: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(master_seed, i);
                f(i, &mut rng)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25, 0.5];
        let w: Welford = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((w.mean() - mean).abs() < 1e-14);
        assert!((w.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn welford_merge_equals_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let full: Welford = xs.iter().copied().collect();
        let mut a: Welford = xs[..40].iter().copied().collect();
        let b: Welford = xs[40..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.count(), full.count());
        assert!((a.mean() - full.mean()).abs() < 1e-13);
        assert!((a.variance() - full.variance()).abs() < 1e-12);
    }

    #[test]
    fn log_values_rescale_large_weights() {
        let logs = [800.0, 799.0, 801.0];
        let est = McEstimate::from_log_values(&logs, 7);
        assert!(est.overflow);
        assert!(est.mean.is_infinite());
        let direct = 800.0 + ((1.0 + (-1.0f64).exp() + 1.0f64.exp()) / 3.0).ln();
        assert!((est.log_mean - direct).abs() < 1e-12);
    }

    #[test]
    fn constant_replicates_have_zero_stderr() {
        let est = McEstimate::from_log_values(&[0.0; 10], 1);
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn runner_independent_of_worker_count() {
        use rand::Rng;
        let f = |_i: u64, rng: &mut Stream| Ok(rng.random::<f64>());
        let a = run_replicates(1000, 42, 1, f).unwrap();
        let b = run_replicates(1000, 42, 8, f).unwrap();
        assert_eq!(a, b);
    }
}
