//! First and second variation of the solution with respect to the initial
//! datum, integrated on the base path's grid and noise (synchronous coupling).

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::noise::NoiseRealization;
use crate::solver::{check_setup, simulate_path, PathRecord, Workspace};
use crate::spectral::DiagonalModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariationOrder {
    First,
    Second,
}

/// A variation process `v = ∂_y u(x)` or `w = ∂²u(x)(y₁, y₂)` on the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationRecord {
    order: VariationOrder,
    record: PathRecord,
}

impl VariationRecord {
    pub fn order(&self) -> VariationOrder {
        self.order
    }
    pub fn record(&self) -> &PathRecord {
        &self.record
    }
    pub fn times(&self) -> &[f64] {
        self.record.times()
    }
    pub fn len(&self) -> usize {
        self.record.len()
    }
    pub fn is_empty(&self) -> bool {
        self.record.is_empty()
    }
    pub fn state(&self, n: usize) -> &[f64] {
        self.record.state(n)
    }
    pub fn final_state(&self) -> &[f64] {
        self.record.final_state()
    }
    pub fn pre_jump_state(&self, i: usize) -> &[f64] {
        self.record.pre_jump_state(i)
    }
    pub fn uniform_state<'a>(&'a self, noise: &NoiseRealization, i: usize) -> &'a [f64] {
        self.record.uniform_state(noise, i)
    }
    /// Trajectory CSV in the path schema plus a `tag` column (`v` or `w`).
    pub fn to_csv(&self) -> String {
        let tag = match self.order {
            VariationOrder::First => "v",
            VariationOrder::Second => "w",
        };
        let mut out = String::new();
        for (i, line) in self.record.to_csv().lines().enumerate() {
            out.push_str(line);
            out.push_str(if i == 0 { ",tag" } else { "," });
            if i > 0 {
                out.push_str(tag);
            }
            out.push('\n');
        }
        out
    }

    /// Largest deviation from `other` over all grid states.
    pub fn max_abs_difference(&self, other: &VariationRecord) -> f64 {
        (0..self.len())
            .flat_map(|n| self.state(n).iter().zip(other.state(n)).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

fn check_coupling(base: &PathRecord, noise: &NoiseRealization) -> Result<()> {
    let grid = noise.grid();
    let coupled = base.len() == grid.len() + 1
        && base.times()[1..] == *grid
        && base.n_jumps() == noise.jumps().len();
    if coupled {
        Ok(())
    } else {
        Err(LabError::Coupling(
            "base path was not produced on this noise realization".into(),
        ))
    }
}

/// `dv = Av dt + Df(u)v dt + DB(u)v dW + ∫ D₁G(u-, z)v μ̄(dt, dz)`, `v(0) = y`.
pub fn first_variation(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    base: &PathRecord,
    y: &[f64],
    noise: &NoiseRealization,
) -> Result<VariationRecord> {
    check_setup(model, coeffs, y, noise)?;
    check_dim(model.dim(), base.dim())?;
    check_coupling(base, noise)?;
    coeffs.require_order(1, "first variation")?;

    let d = model.dim();
    let mut rec = PathRecord::with_capacity(d, noise);
    let mut ws = Workspace::new(d);
    let mut v = y.to_vec();
    rec.push_state(&v);
    let slots = noise.jump_slots();
    let jumps = noise.jumps();
    let mut next = 0;
    for n in 0..noise.n_intervals() {
        let (t0, t1) = noise.interval(n);
        let delta = t1 - t0;
        let u = base.state(n);
        coeffs.drift_jvp(u, &v, &mut ws.drift);
        coeffs.compensator_jvp(u, &v, &mut ws.comp)?;
        coeffs.diffusion_jvp(u, &v, noise.increment(n), &mut ws.diff);
        for k in 0..d {
            v[k] += delta * (ws.drift[k] - ws.comp[k]) + ws.diff[k];
        }
        model.semigroup_in_place(delta, &mut v);
        while next < slots.len() && slots[next] == n {
            rec.push_pre_jump(&v);
            coeffs.jump_jvp(base.pre_jump_state(next), jumps[next].mark, &v, &mut ws.jump);
            for (vk, gk) in v.iter_mut().zip(&ws.jump) {
                *vk += gk;
            }
            next += 1;
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(LabError::NumericalBlowup { step: n, time: t1 });
        }
        rec.push_state(&v);
    }
    Ok(VariationRecord { order: VariationOrder::First, record: rec })
}

/// Second variation `w = ∂²u(x)(y₁, y₂)`, `w(0) = 0`.
///
/// With `literal = false` the diffusion terms `DB(u)w dW + D²B(u)(v₁, v₂) dW`
/// are included; `literal = true` drops them.
pub fn second_variation(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    base: &PathRecord,
    v1: &VariationRecord,
    v2: &VariationRecord,
    noise: &NoiseRealization,
    literal: bool,
) -> Result<VariationRecord> {
    coeffs.require_order(2, "second variation")?;
    check_setup(model, coeffs, base.initial_state(), noise)?;
    check_coupling(base, noise)?;
    for v in [v1, v2] {
        if v.order != VariationOrder::First {
            return Err(LabError::InvalidInput("second_variation needs first variations".into()));
        }
        check_coupling(&v.record, noise)?;
    }

    let d = model.dim();
    let mut rec = PathRecord::with_capacity(d, noise);
    let mut ws = Workspace::new(d);
    let mut src = Workspace::new(d);
    let mut w = vec![0.0; d];
    rec.push_state(&w);
    let slots = noise.jump_slots();
    let jumps = noise.jumps();
    let mut next = 0;
    for n in 0..noise.n_intervals() {
        let (t0, t1) = noise.interval(n);
        let delta = t1 - t0;
        let u = base.state(n);
        let (a, b) = (v1.state(n), v2.state(n));
        let dw = noise.increment(n);
        coeffs.drift_jvp(u, &w, &mut ws.drift);
        coeffs.drift_hvp(u, a, b, &mut src.drift);
        coeffs.compensator_jvp(u, &w, &mut ws.comp)?;
        coeffs.compensator_hvp(u, a, b, &mut src.comp)?;
        if literal {
            ws.diff.fill(0.0);
            src.diff.fill(0.0);
        } else {
            coeffs.diffusion_jvp(u, &w, dw, &mut ws.diff);
            coeffs.diffusion_hvp(u, a, b, dw, &mut src.diff);
        }
        for k in 0..d {
            w[k] += delta * ((ws.drift[k] + src.drift[k]) - (ws.comp[k] + src.comp[k]))
                + (ws.diff[k] + src.diff[k]);
        }
        model.semigroup_in_place(delta, &mut w);
        while next < slots.len() && slots[next] == n {
            rec.push_pre_jump(&w);
            let u_minus = base.pre_jump_state(next);
            let z = jumps[next].mark;
            coeffs.jump_jvp(u_minus, z, &w, &mut ws.jump);
            coeffs.jump_hvp(u_minus, z, v1.pre_jump_state(next), v2.pre_jump_state(next), &mut src.jump);
            for k in 0..d {
                w[k] += ws.jump[k] + src.jump[k];
            }
            next += 1;
        }
        if !w.iter().all(|x| x.is_finite()) {
            return Err(LabError::NumericalBlowup { step: n, time: t1 });
        }
        rec.push_state(&w);
    }
    Ok(VariationRecord { order: VariationOrder::Second, record: rec })
}

/// Difference-quotient oracle on matched noise: forward (order 1) or central
/// second difference (order 2).
pub fn finite_difference_variation(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    y: &[f64],
    h: f64,
    noise: &NoiseRealization,
    order: u8,
) -> Result<VariationRecord> {
    check_dim(x0.len(), y.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(LabError::InvalidInput(format!("step h = {h} must be positive")));
    }
    let shifted = |s: f64| -> Vec<f64> { x0.iter().zip(y).map(|(x, d)| x + s * d).collect() };
    let centre = simulate_path(model, coeffs, x0, noise)?;
    let plus = simulate_path(model, coeffs, &shifted(h), noise)?;
    let (combined, kind) = match order {
        1 => (combine(&[(&plus, 1.0 / h), (&centre, -1.0 / h)], noise), VariationOrder::First),
        2 => {
            let minus = simulate_path(model, coeffs, &shifted(-h), noise)?;
            let h2 = h * h;
            (
                combine(&[(&plus, 1.0 / h2), (&centre, -2.0 / h2), (&minus, 1.0 / h2)], noise),
                VariationOrder::Second,
            )
        }
        o => return Err(LabError::InvalidInput(format!("finite-difference order {o} not in {{1, 2}}"))),
    };
    Ok(VariationRecord { order: kind, record: combined })
}

fn combine(terms: &[(&PathRecord, f64)], noise: &NoiseRealization) -> PathRecord {
    let d = terms[0].0.dim();
    let mut rec = PathRecord::with_capacity(d, noise);
    let mut buf = vec![0.0; d];
    let lin = |buf: &mut Vec<f64>, pick: &dyn Fn(&PathRecord) -> &[f64]| {
        buf.fill(0.0);
        for (p, c) in terms {
            for (b, x) in buf.iter_mut().zip(pick(p)) {
                *b += c * x;
            }
        }
    };
    for n in 0..terms[0].0.len() {
        lin(&mut buf, &|p| p.state(n));
        rec.push_state(&buf);
    }
    for i in 0..terms[0].0.n_jumps() {
        lin(&mut buf, &|p| p.pre_jump_state(i));
        rec.push_pre_jump(&buf);
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin_coefficients, CoefficientSpec, DiffusionSpec, DriftSpec, JumpSpec, PerMode};
    use crate::marks::MarkLaw;
    use crate::noise::sample_noise;
    use serde_json::json;

    fn rich(m: &DiagonalModel) -> CoefficientSet {
        let spec = CoefficientSpec {
            drift: DriftSpec::NemytskiiSin { c: 1.0 },
            diffusion: DiffusionSpec::MultiplicativeDiagonal {
                b: PerMode::Scalar(1.0),
                beta: PerMode::Scalar(0.5),
            },
            jump: JumpSpec::JumpSine { c0: 0.3, c1: 0.2 },
            ..Default::default()
        };
        CoefficientSet::new(&spec, m).unwrap()
    }

    #[test]
    fn zero_direction_and_pure_flow() {
        let m = DiagonalModel::heat(3, 1.0, 2.0, MarkLaw::Gaussian, 1.0).unwrap();
        let c = rich(&m);
        let noise = sample_noise(&m, 64, 0, 3).unwrap();
        let x0 = [0.4, -0.2, 0.9];
        let base = simulate_path(&m, &c, &x0, &noise).unwrap();
        let v = first_variation(&m, &c, &base, &[0.0; 3], &noise).unwrap();
        assert!((0..v.len()).all(|n| v.state(n).iter().all(|x| *x == 0.0)));

        let z = builtin_coefficients("zero", &json!({}), &m).unwrap();
        let base = simulate_path(&m, &z, &x0, &noise).unwrap();
        let y = [1.0, 2.0, -1.0];
        let v = first_variation(&m, &z, &base, &y, &noise).unwrap();
        for (n, t) in v.times().iter().enumerate() {
            let e = m.semigroup_apply(*t, &y).unwrap();
            for k in 0..3 {
                assert!((v.state(n)[k] - e[k]).abs() <= 1e-12 * e[k].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn linear_drift_gives_shifted_exponential() {
        let m = DiagonalModel::scalar(-1.0, 1.0, 3.0, MarkLaw::Gaussian, 1.0).unwrap();
        let spec = CoefficientSpec {
            drift: DriftSpec::Linear { diag: PerMode::Scalar(-0.5) },
            diffusion: DiffusionSpec::Additive { b: PerMode::Scalar(1.0) },
            jump: JumpSpec::Additive { g: PerMode::Scalar(0.2), h: PerMode::Scalar(1.0) },
            ..Default::default()
        };
        let c = CoefficientSet::new(&spec, &m).unwrap();
        let noise = sample_noise(&m, 10_000, 1, 1).unwrap();
        let base = simulate_path(&m, &c, &[0.3], &noise).unwrap();
        let v = first_variation(&m, &c, &base, &[2.0], &noise).unwrap();
        let exact = 2.0 * (-1.5f64).exp();
        assert!((v.final_state()[0] - exact).abs() < 1e-4 * exact);
        let fd = finite_difference_variation(&m, &c, &[0.3], &[2.0], 0.37, &noise, 1).unwrap();
        assert!(fd.max_abs_difference(&v) < 1e-12);
    }

    #[test]
    fn linear_coefficients_have_zero_second_variation() {
        let m = DiagonalModel::heat(2, 1.0, 2.0, MarkLaw::Gaussian, 1.0).unwrap();
        let spec = CoefficientSpec {
            drift: DriftSpec::Linear { diag: PerMode::Scalar(0.5) },
            diffusion: DiffusionSpec::Additive { b: PerMode::Scalar(1.0) },
            jump: JumpSpec::JumpLinear {
                gamma0: 0.1,
                gamma1: 0.2,
                g: PerMode::Scalar(0.0),
                h: PerMode::Scalar(0.0),
            },
            ..Default::default()
        };
        let c = CoefficientSet::new(&spec, &m).unwrap();
        let noise = sample_noise(&m, 32, 4, 4).unwrap();
        let base = simulate_path(&m, &c, &[1.0, 1.0], &noise).unwrap();
        let v1 = first_variation(&m, &c, &base, &[1.0, 0.0], &noise).unwrap();
        let v2 = first_variation(&m, &c, &base, &[0.0, 1.0], &noise).unwrap();
        let w = second_variation(&m, &c, &base, &v1, &v2, &noise, false).unwrap();
        assert!((0..w.len()).all(|n| w.state(n).iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn second_variation_symmetric_bilinear() {
        let m = DiagonalModel::heat(3, 1.0, 4.0, MarkLaw::Gaussian, 0.5).unwrap();
        let c = rich(&m);
        for p in 0..5 {
            let noise = sample_noise(&m, 40, p, 21).unwrap();
            let base = simulate_path(&m, &c, &[0.3, 0.7, -0.5], &noise).unwrap();
            let y1 = [1.0, -0.5, 0.2];
            let y2 = [0.3, 0.4, 1.0];
            let v1 = first_variation(&m, &c, &base, &y1, &noise).unwrap();
            let v2 = first_variation(&m, &c, &base, &y2, &noise).unwrap();
            let w12 = second_variation(&m, &c, &base, &v1, &v2, &noise, false).unwrap();
            let w21 = second_variation(&m, &c, &base, &v2, &v1, &noise, false).unwrap();
            assert!(w12.max_abs_difference(&w21) < 1e-13);
            assert_eq!(w12.state(0), &[0.0; 3]);
            let y1s: Vec<f64> = y1.iter().map(|x| 2.5 * x).collect();
            let v1s = first_variation(&m, &c, &base, &y1s, &noise).unwrap();
            let ws = second_variation(&m, &c, &base, &v1s, &v2, &noise, false).unwrap();
            for n in 0..ws.len() {
                for k in 0..3 {
                    let expect = 2.5 * w12.state(n)[k];
                    assert!((ws.state(n)[k] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
                }
            }
            let zero = first_variation(&m, &c, &base, &[0.0; 3], &noise).unwrap();
            let w0 = second_variation(&m, &c, &base, &zero, &v2, &noise, false).unwrap();
            assert!((0..w0.len()).all(|n| w0.state(n).iter().all(|x| *x == 0.0)));
        }
    }

    #[test]
    fn riccati_reference() {
        // u' = u², u(0) = x: u = x/(1 - xt), ∂u = 1/(1 - xt)², ∂²u = 2t/(1 - xt)³
        for &(x0, tol) in &[(0.0f64, 1e-12f64), (0.25, 2e-4)] {
            let m = DiagonalModel::scalar(0.0, 0.0, 0.0, MarkLaw::default(), 1.0).unwrap();
            let c = builtin_coefficients("quadratic", &json!({"c": 1.0}), &m).unwrap();
            let noise = sample_noise(&m, 20_000, 0, 0).unwrap();
            let base = simulate_path(&m, &c, &[x0], &noise).unwrap();
            let v = first_variation(&m, &c, &base, &[1.0], &noise).unwrap();
            let w = second_variation(&m, &c, &base, &v, &v, &noise, false).unwrap();
            let t = 1.0;
            let s = 1.0 - x0 * t;
            assert!((v.final_state()[0] - 1.0 / (s * s)).abs() < tol.max(1e-12) * 10.0);
            assert!((w.final_state()[0] - 2.0 * t / (s * s * s)).abs() < tol * 10.0 + 1e-12);
            let fd = finite_difference_variation(&m, &c, &[x0], &[1.0], 1e-3, &noise, 2).unwrap();
            assert!((fd.final_state()[0] - w.final_state()[0]).abs() < 1e-4);
        }
    }

    #[test]
    fn fd_slope_for_sine_drift() {
        let m = DiagonalModel::heat(2, 1.0, 2.0, MarkLaw::Gaussian, 1.0).unwrap();
        let c = rich(&m);
        let noise = sample_noise(&m, 200, 7, 7).unwrap();
        let x0 = [0.8, -0.3];
        let y = [1.0, 0.5];
        let base = simulate_path(&m, &c, &x0, &noise).unwrap();
        let v = first_variation(&m, &c, &base, &y, &noise).unwrap();
        let hs = [1e-1, 1e-2, 1e-3, 1e-4];
        let errs: Vec<f64> = hs
            .iter()
            .map(|h| finite_difference_variation(&m, &c, &x0, &y, *h, &noise, 1).unwrap().max_abs_difference(&v))
            .collect();
        for (h, e) in hs.windows(2).zip(errs.windows(2)) {
            let slope = (e[0] / e[1]).ln() / (h[0] / h[1]).ln();
            assert!((0.8..1.2).contains(&slope), "{errs:?}");
        }
    }

    #[test]
    fn literal_flag_drops_diffusion_terms() {
        let m = DiagonalModel::heat(2, 1.0, 0.0, MarkLaw::Gaussian, 1.0).unwrap();
        let c = rich(&m);
        let noise = sample_noise(&m, 50, 0, 0).unwrap();
        let base = simulate_path(&m, &c, &[0.5, 0.5], &noise).unwrap();
        let v = first_variation(&m, &c, &base, &[1.0, 1.0], &noise).unwrap();
        let full = second_variation(&m, &c, &base, &v, &v, &noise, false).unwrap();
        let lit = second_variation(&m, &c, &base, &v, &v, &noise, true).unwrap();
        assert!(full.max_abs_difference(&lit) > 1e-6);

        let spec = CoefficientSpec { derivative_order: 1, ..Default::default() };
        let c1 = CoefficientSet::new(&spec, &m).unwrap();
        let err = second_variation(&m, &c1, &base, &v, &v, &noise, false).unwrap_err();
        assert!(matches!(err, LabError::Capability(_)));
    }

    #[test]
    fn mismatched_noise_is_a_coupling_error() {
        let m = DiagonalModel::heat(2, 1.0, 5.0, MarkLaw::Gaussian, 1.0).unwrap();
        let c = rich(&m);
        let a = sample_noise(&m, 50, 0, 0).unwrap();
        let b = sample_noise(&m, 51, 0, 0).unwrap();
        let base = simulate_path(&m, &c, &[0.5, 0.5], &a).unwrap();
        let err = first_variation(&m, &c, &base, &[1.0, 0.0], &b).unwrap_err();
        assert!(matches!(err, LabError::Coupling(_)));
    }
}
