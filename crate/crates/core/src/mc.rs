//! Parallel Monte Carlo driver with a reduction order that does not depend on
//! the number of workers.
//!
//! Paths are grouped in fixed chunks; each chunk is accumulated sequentially
//! and the chunk summaries are merged left to right, so a given seed gives
//! bit-identical estimates on 1 or 64 threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

const CHUNK: u64 = 64;
pub const WORKERS_ENV: &str = "SPDELAB_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub seed: u64,
}

impl McEstimate {
    /// A deterministic value carried through the same reporting machinery.
    pub fn exact(value: f64) -> Self {
        Self { mean: value, stderr: 0.0, n_paths: 0, seed: 0 }
    }

    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let mut m = Moments::default();
        for x in samples {
            m.push(*x);
        }
        m.estimate(seed)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { mean: c * self.mean, stderr: c.abs() * self.stderr, ..*self }
    }

    /// `|mean|`, with the same standard error.
    pub fn abs(&self) -> Self {
        Self { mean: self.mean.abs(), ..*self }
    }
}

/// Running mean and centred second moment (Welford / Chan et al. merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, seed: u64) -> McEstimate {
        let stderr = if self.n < 2 { 0.0 } else { (self.variance() / self.n as f64).sqrt() };
        McEstimate { mean: self.mean, stderr, n_paths: self.n, seed }
    }
}

/// Run `sample(path_index, row)` for every path and reduce each of the
/// `width` columns to its mean and standard error.
pub fn accumulate<F>(n_paths: u64, width: usize, seed: u64, sample: F) -> Result<Vec<McEstimate>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    if n_paths == 0 {
        return Err(LabError::InvalidInput("n_paths must be >= 1".into()));
    }
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            let mut row = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                row.fill(0.0);
                sample(i, &mut row)?;
                for (a, x) in acc.iter_mut().zip(&row) {
                    a.push(*x);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Moments::default(); width];
    for chunk in &partial {
        for (t, m) in total.iter_mut().zip(chunk) {
            t.merge(m);
        }
    }
    Ok(total.iter().map(|m| m.estimate(seed)).collect())
}

/// Per-path results in path order (for small outputs only).
pub fn collect_paths<T, F>(n_paths: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    // `&f` is `Send` where `f` alone need not be
    (0..n_paths).into_par_iter().map(&f).collect()
}

/// Size the global worker pool from `workers` or `SPDELAB_WORKERS`.
/// Has no effect once the pool exists.
pub fn configure_workers(workers: Option<usize>) -> Result<()> {
    let n = match workers {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                LabError::config(WORKERS_ENV, format!("not a worker count: {s:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(LabError::config(WORKERS_ENV, "worker count must be >= 1"));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
