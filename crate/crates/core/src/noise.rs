//! Frozen draws of the driving noise: Q-Wiener increments on a jump-adapted
//! grid plus the atoms `(τ_i, z_i)` of the Poisson random measure.

use std::fmt::Write as _;

use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{LabError, Result};
use crate::rng::{path_stream, Lane};
use crate::spectral::DiagonalModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    dim: usize,
    grid: Vec<f64>,
    /// Row `n` (length `dim`) is the increment over `(grid[n-1], grid[n]]`, with `grid[-1] = 0`.
    increments: Vec<f64>,
    jumps: Vec<JumpEvent>,
    /// Grid index of each jump, non-decreasing.
    jump_slots: Vec<usize>,
    /// Grid index of the uniform time `T (i+1) / n_steps`.
    uniform_slots: Vec<usize>,
    seed: u64,
    path_index: u64,
}

impl NoiseRealization {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid is never empty")
    }
    pub fn n_intervals(&self) -> usize {
        self.grid.len()
    }
    pub fn n_steps(&self) -> usize {
        self.uniform_slots.len()
    }
    /// `(t_start, t_end)` of interval `n`.
    #[inline]
    pub fn interval(&self, n: usize) -> (f64, f64) {
        let start = if n == 0 { 0.0 } else { self.grid[n - 1] };
        (start, self.grid[n])
    }
    #[inline]
    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.dim..(n + 1) * self.dim]
    }
    pub fn jumps(&self) -> &[JumpEvent] {
        &self.jumps
    }
    pub fn jump_slots(&self) -> &[usize] {
        &self.jump_slots
    }
    pub fn uniform_slots(&self) -> &[usize] {
        &self.uniform_slots
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Deterministic CSV dump used for regression fixtures.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed={} path_index={} dim={}", self.seed, self.path_index, self.dim);
        s.push_str("kind,index,time,values\n");
        for n in 0..self.grid.len() {
            let _ = write!(s, "grid,{},{}", n, self.grid[n]);
            for v in self.increment(n) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        for (i, j) in self.jumps.iter().enumerate() {
            let _ = writeln!(s, "jump,{},{},{}", i, j.time, j.mark);
        }
        s
    }
}

/// Draw the realization for `path_index` under `master_seed`.
///
/// The uniform-grid Wiener increments come from their own stream, so adding
/// or removing jumps never changes the underlying Brownian path: a jump
/// strictly inside a uniform step splits that step by Brownian bridge.
pub fn sample_noise(
    model: &DiagonalModel,
    n_steps: usize,
    path_index: u64,
    master_seed: u64,
) -> Result<NoiseRealization> {
    if n_steps == 0 {
        return Err(LabError::InvalidInput("n_steps must be >= 1".into()));
    }
    let d = model.dim();
    let horizon = model.horizon();
    let q = model.wiener_variances();
    let h = horizon / n_steps as f64;

    let mut wiener = path_stream(master_seed, path_index, Lane::Wiener);
    let mut coarse = vec![0.0; n_steps * d];
    for row in coarse.chunks_exact_mut(d) {
        for (k, dw) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut wiener);
            *dw = if q[k] == 0.0 { 0.0 } else { (q[k] * h).sqrt() * z };
        }
    }

    let jumps = sample_jumps(model, path_index, master_seed);

    let mut bridge = path_stream(master_seed, path_index, Lane::Bridge);
    let mut grid = Vec::with_capacity(n_steps + jumps.len());
    let mut increments = Vec::with_capacity((n_steps + jumps.len()) * d);
    let mut jump_slots = Vec::with_capacity(jumps.len());
    let mut uniform_slots = Vec::with_capacity(n_steps);
    let mut next_jump = 0;
    let mut remaining = vec![0.0; d];

    for i in 0..n_steps {
        let mut start = horizon * i as f64 / n_steps as f64;
        let end = if i + 1 == n_steps {
            horizon
        } else {
            horizon * (i + 1) as f64 / n_steps as f64
        };
        remaining.copy_from_slice(&coarse[i * d..(i + 1) * d]);

        while next_jump < jumps.len() && jumps[next_jump].time < end {
            let tau = jumps[next_jump].time;
            if tau > start {
                let frac = (tau - start) / (end - start);
                for k in 0..d {
                    let z: f64 = StandardNormal.sample(&mut bridge);
                    let sd = (q[k] * (tau - start) * (end - tau) / (end - start)).sqrt();
                    let piece = frac * remaining[k] + if q[k] == 0.0 { 0.0 } else { sd * z };
                    increments.push(piece);
                    remaining[k] -= piece;
                }
                grid.push(tau);
                start = tau;
            }
            jump_slots.push(grid.len() - 1);
            next_jump += 1;
        }
        grid.push(end);
        increments.extend_from_slice(&remaining);
        uniform_slots.push(grid.len() - 1);
        while next_jump < jumps.len() && jumps[next_jump].time == end {
            jump_slots.push(grid.len() - 1);
            next_jump += 1;
        }
    }
    debug_assert_eq!(next_jump, jumps.len());

    Ok(NoiseRealization {
        dim: d,
        grid,
        increments,
        jumps,
        jump_slots,
        uniform_slots,
        seed: master_seed,
        path_index,
    })
}

/// Poisson process of rate `λ_m` on `(0, T]` with i.i.d. marks.
fn sample_jumps(model: &DiagonalModel, path_index: u64, master_seed: u64) -> Vec<JumpEvent> {
    let rate = model.jump_rate();
    if rate == 0.0 {
        return Vec::new();
    }
    let mut rng = path_stream(master_seed, path_index, Lane::Jumps);
    let exp = Exp::new(rate).expect("rate validated positive");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(&mut rng);
        if t > model.horizon() {
            break;
        }
        if t > 0.0 {
            let mark = model.mark_law().sample(&mut rng);
            out.push(JumpEvent { time: t, mark });
        }
    }
    out
}

/// `Ḡ(x) = ∫_Z G(x, z) m(dz)`, the drift correction turning `μ` into `μ̄`.
pub fn compensator_integral(
    coeffs: &CoefficientSet,
    model: &DiagonalModel,
    x: &[f64],
) -> Result<Vec<f64>> {
    crate::error::check_dim(model.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    coeffs.compensator(x, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::MarkLaw;

    fn model(rate: f64, q: f64) -> DiagonalModel {
        DiagonalModel::heat(3, q, rate, MarkLaw::Gaussian, 1.0).unwrap()
    }

    #[test]
    fn zero_intensity_has_no_jumps() {
        let n = sample_noise(&model(0.0, 1.0), 16, 0, 1).unwrap();
        assert!(n.jumps().is_empty());
        assert_eq!(n.grid().len(), 16);
        assert_eq!(n.horizon(), 1.0);
    }

    #[test]
    fn degenerate_covariance_gives_zero_increments() {
        let n = sample_noise(&model(3.0, 0.0), 20, 5, 9).unwrap();
        assert!(n.increments.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grid_contains_jumps_and_is_increasing() {
        for p in 0..50 {
            let n = sample_noise(&model(7.0, 1.0), 10, p, 42).unwrap();
            assert!(n.grid().windows(2).all(|w| w[0] < w[1]));
            assert!(n.grid()[0] > 0.0);
            for (j, slot) in n.jumps().iter().zip(n.jump_slots()) {
                assert_eq!(n.grid()[*slot], j.time);
                assert!(j.time > 0.0 && j.time <= 1.0);
            }
            assert_eq!(n.uniform_slots().len(), 10);
            assert_eq!(*n.grid().last().unwrap(), 1.0);
        }
    }

    #[test]
    fn bridge_preserves_uniform_increments() {
        let with = sample_noise(&model(9.0, 1.0), 8, 3, 11).unwrap();
        let without = sample_noise(&model(0.0, 1.0), 8, 3, 11).unwrap();
        assert!(!with.jumps().is_empty());
        let mut prev = 0;
        for (i, &slot) in with.uniform_slots().iter().enumerate() {
            for k in 0..3 {
                let s: f64 = (prev..=slot).map(|n| with.increment(n)[k]).sum();
                assert!((s - without.increment(i)[k]).abs() < 1e-12);
            }
            prev = slot + 1;
        }
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let a = sample_noise(&model(4.0, 0.5), 32, 17, 2024).unwrap();
        let b = sample_noise(&model(4.0, 0.5), 32, 17, 2024).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let c = sample_noise(&model(4.0, 0.5), 32, 18, 2024).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(sample_noise(&model(1.0, 1.0), 0, 0, 0).is_err());
    }
}
