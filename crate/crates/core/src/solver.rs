//! Jump-adapted exponential Euler for the mild formulation.
//!
//! Between consecutive grid points `t_n < t_{n+1}` (gap `δ`, increment `ΔW`):
//!
//! ```text
//! u⁻(t_{n+1}) = e^{δA} [ u(t_n) + δ f(u(t_n)) - δ Ḡ(u(t_n)) + B(u(t_n)) ΔW ]
//! u(t_{n+1})  = u⁻(t_{n+1}) + G(u⁻(t_{n+1}), z)      if a jump with mark z sits at t_{n+1}
//! ```
//!
//! The `-δ Ḡ` drift together with the raw jumps integrates against `μ̄`.

use std::fmt::Write as _;

use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::noise::NoiseRealization;
use crate::spectral::{norm, DiagonalModel};

/// Discrete trajectory on `[0] ∪ grid`; index 0 holds the initial datum.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    pre_jump: Vec<f64>,
    /// Time index of each jump (aligned with `pre_jump` rows).
    jump_index: Vec<usize>,
}

impl PathRecord {
    pub(crate) fn with_capacity(dim: usize, noise: &NoiseRealization) -> Self {
        let mut times = Vec::with_capacity(noise.n_intervals() + 1);
        times.push(0.0);
        times.extend_from_slice(noise.grid());
        Self {
            dim,
            states: Vec::with_capacity(times.len() * dim),
            times,
            pre_jump: Vec::with_capacity(noise.jumps().len() * dim),
            jump_index: noise.jump_slots().iter().map(|s| s + 1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    #[inline]
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }
    pub fn initial_state(&self) -> &[f64] {
        self.state(0)
    }
    pub fn final_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }
    pub fn n_jumps(&self) -> usize {
        self.jump_index.len()
    }
    /// Left limit `u(τ_i-)` at the i-th jump.
    pub fn pre_jump_state(&self, i: usize) -> &[f64] {
        &self.pre_jump[i * self.dim..(i + 1) * self.dim]
    }
    pub fn jump_time_index(&self, i: usize) -> usize {
        self.jump_index[i]
    }

    /// State at the last grid time `<= t` (càdlàg evaluation).
    pub fn state_at(&self, t: f64) -> &[f64] {
        let n = self.times.partition_point(|s| *s <= t).max(1) - 1;
        self.state(n)
    }

    /// Index of the uniform grid point `i` (0 is the initial time).
    pub fn uniform_state<'a>(&'a self, noise: &NoiseRealization, i: usize) -> &'a [f64] {
        if i == 0 {
            self.state(0)
        } else {
            self.state(noise.uniform_slots()[i - 1] + 1)
        }
    }

    pub(crate) fn push_state(&mut self, x: &[f64]) {
        self.states.extend_from_slice(x);
    }
    pub(crate) fn push_pre_jump(&mut self, x: &[f64]) {
        self.pre_jump.extend_from_slice(x);
    }

    /// `max_n |u(t_n)|^p` over grid states and left limits at jumps.
    pub fn sup_norm_p(&self, p: f64) -> Result<f64> {
        sup_norm_p(self, p)
    }

    /// CSV with columns `time,u_1..u_d,is_jump`; each jump contributes its
    /// left limit (is_jump = 0) and post-jump value (is_jump = 1) rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for k in 1..=self.dim {
            let _ = write!(s, ",u_{k}");
        }
        s.push_str(",is_jump\n");
        let mut jump_cursor = 0;
        for n in 0..self.times.len() {
            let mut is_jump = 0;
            while jump_cursor < self.jump_index.len() && self.jump_index[jump_cursor] == n {
                write_row(&mut s, self.times[n], self.pre_jump_state(jump_cursor), 0);
                jump_cursor += 1;
                is_jump = 1;
            }
            write_row(&mut s, self.times[n], self.state(n), is_jump);
        }
        s
    }
}

pub(crate) fn write_row(s: &mut String, t: f64, x: &[f64], flag: u8) {
    let _ = write!(s, "{t}");
    for v in x {
        let _ = write!(s, ",{v}");
    }
    let _ = writeln!(s, ",{flag}");
}

pub fn sup_norm_p(path: &PathRecord, p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(LabError::InvalidInput(format!("p = {p} must be >= 2")));
    }
    let sup = path
        .states
        .chunks_exact(path.dim)
        .chain(path.pre_jump.chunks_exact(path.dim))
        .map(norm)
        .fold(0.0f64, f64::max);
    Ok(sup.powf(p))
}

pub(crate) fn check_setup(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    noise: &NoiseRealization,
) -> Result<()> {
    check_dim(model.dim(), x0.len())?;
    check_dim(model.dim(), coeffs.dim())?;
    check_dim(model.dim(), noise.dim())?;
    if (noise.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(LabError::Coupling(format!(
            "noise horizon {} differs from model horizon {}",
            noise.horizon(),
            model.horizon()
        )));
    }
    Ok(())
}

/// Scratch buffers for one exponential-Euler step.
pub(crate) struct Workspace {
    pub drift: Vec<f64>,
    pub comp: Vec<f64>,
    pub diff: Vec<f64>,
    pub jump: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            comp: vec![0.0; d],
            diff: vec![0.0; d],
            jump: vec![0.0; d],
        }
    }
}

#[inline]
fn ensure_finite(x: &[f64], step: usize, time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LabError::NumericalBlowup { step, time })
    }
}

/// Continuous part of one step, in place: `u ← e^{δA}[u + δ f(u) - δ Ḡ(u) + B(u) ΔW]`.
#[inline]
pub(crate) fn euler_step(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    ws: &mut Workspace,
    u: &mut [f64],
    delta: f64,
    dw: &[f64],
) -> Result<()> {
    coeffs.drift(u, &mut ws.drift);
    coeffs.compensator(u, &mut ws.comp)?;
    coeffs.diffusion(u, dw, &mut ws.diff);
    for k in 0..u.len() {
        u[k] += delta * (ws.drift[k] - ws.comp[k]) + ws.diff[k];
    }
    model.semigroup_in_place(delta, u);
    Ok(())
}

/// Simulate the mild solution started at `x0` along `noise`.
pub fn simulate_path(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    noise: &NoiseRealization,
) -> Result<PathRecord> {
    check_setup(model, coeffs, x0, noise)?;
    let d = model.dim();
    let mut rec = PathRecord::with_capacity(d, noise);
    let mut ws = Workspace::new(d);
    let mut u = x0.to_vec();
    rec.push_state(&u);
    let slots = noise.jump_slots();
    let jumps = noise.jumps();
    let mut next = 0;
    for n in 0..noise.n_intervals() {
        let (t0, t1) = noise.interval(n);
        euler_step(model, coeffs, &mut ws, &mut u, t1 - t0, noise.increment(n))?;
        while next < slots.len() && slots[next] == n {
            rec.push_pre_jump(&u);
            coeffs.jump(&u, jumps[next].mark, &mut ws.jump);
            for (uk, gk) in u.iter_mut().zip(&ws.jump) {
                *uk += gk;
            }
            next += 1;
        }
        ensure_finite(&u, n, t1)?;
        rec.push_state(&u);
    }
    Ok(rec)
}

/// Discrete Picard iteration of the mild-solution map on frozen noise.
///
/// `u⁰(t) = e^{tA} x0`; each further iterate evaluates every integrand along
/// the previous iterate. Returns `n_iter + 1` records (including `u⁰`).
pub fn picard_iterate(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    noise: &NoiseRealization,
    n_iter: usize,
) -> Result<Vec<PathRecord>> {
    check_setup(model, coeffs, x0, noise)?;
    if n_iter < 2 {
        return Err(LabError::InvalidInput("picard_iterate needs n_iter >= 2".into()));
    }
    let d = model.dim();
    let mut first = PathRecord::with_capacity(d, noise);
    first.push_state(x0);
    let mut next = 0;
    for n in 0..noise.n_intervals() {
        let t = noise.grid()[n];
        let s = model.semigroup_apply(t, x0)?;
        while next < noise.jump_slots().len() && noise.jump_slots()[next] == n {
            first.push_pre_jump(&s);
            next += 1;
        }
        first.push_state(&s);
    }

    let mut iterates = vec![first];
    let mut ws = Workspace::new(d);
    let slots = noise.jump_slots();
    let jumps = noise.jumps();
    for _ in 0..n_iter {
        let prev = iterates.last().expect("non-empty");
        let mut rec = PathRecord::with_capacity(d, noise);
        let mut s = x0.to_vec();
        rec.push_state(&s);
        let mut next = 0;
        for n in 0..noise.n_intervals() {
            let (t0, t1) = noise.interval(n);
            let delta = t1 - t0;
            let un = prev.state(n);
            coeffs.drift(un, &mut ws.drift);
            coeffs.compensator(un, &mut ws.comp)?;
            coeffs.diffusion(un, noise.increment(n), &mut ws.diff);
            for k in 0..d {
                s[k] += delta * (ws.drift[k] - ws.comp[k]) + ws.diff[k];
            }
            model.semigroup_in_place(delta, &mut s);
            while next < slots.len() && slots[next] == n {
                rec.push_pre_jump(&s);
                coeffs.jump(prev.pre_jump_state(next), jumps[next].mark, &mut ws.jump);
                for (sk, gk) in s.iter_mut().zip(&ws.jump) {
                    *sk += gk;
                }
                next += 1;
            }
            ensure_finite(&s, n, t1)?;
            rec.push_state(&s);
        }
        iterates.push(rec);
    }
    Ok(iterates)
}

/// `max_n |a(t_n) - b(t_n)|`, also over left limits at jumps.
pub fn sup_distance(a: &PathRecord, b: &PathRecord) -> f64 {
    let states = a
        .states
        .chunks_exact(a.dim)
        .zip(b.states.chunks_exact(b.dim));
    let pre = a
        .pre_jump
        .chunks_exact(a.dim)
        .zip(b.pre_jump.chunks_exact(b.dim));
    states
        .chain(pre)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Two solutions driven by the very same noise realization.
pub fn coupled_paths(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    y0: &[f64],
    noise: &NoiseRealization,
) -> Result<(PathRecord, PathRecord)> {
    Ok((
        simulate_path(model, coeffs, x0, noise)?,
        simulate_path(model, coeffs, y0, noise)?,
    ))
}
