use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fingerprint, require_bounded_inverse, AgreementReport, InequalityReport, McConfig, SeriesPoint};
use crate::coefficients::{omega1, CoefficientSet};
use crate::error::{check_dim, LabError, Result};
use crate::functional::TestFunctional;
use crate::mc::{accumulate, loglog_slope, McEstimate};
use crate::noise::{sample_noise, NoiseRealization};
use crate::sensitivity::first_variation;
use crate::solver::{simulate_path, PathRecord};
use crate::spectral::{dot, norm, DiagonalModel};

fn horizon_model(model: &DiagonalModel, t: f64) -> Result<DiagonalModel> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidInput(format!("time t = {t} must be positive")));
    }
    model.with_horizon(t)
}

/// `∫₀ᵗ ⟨B⁻¹(u) v, dW⟩_Q` on the grid, where the Cameron–Martin pairing
/// divides mode `k` by its variance `q_k`.
fn malliavin_weight(
    coeffs: &CoefficientSet,
    q: &[f64],
    base: &PathRecord,
    v: &PathRecord,
    noise: &NoiseRealization,
) -> Result<f64> {
    let d = q.len();
    let mut buf = vec![0.0; d];
    let mut weight = 0.0;
    for n in 0..noise.n_intervals() {
        coeffs.diffusion_inverse(base.state(n), v.state(n), &mut buf)?;
        let dw = noise.increment(n);
        for k in 0..d {
            weight += buf[k] * dw[k] / q[k];
        }
    }
    Ok(weight)
}

/// Bismut–Elworthy estimate of `D P_tφ(x0) y`:
/// `(1/t) E[φ(u(t)) ∫₀ᵗ ⟨B⁻¹(u(s)) v(s), dW(s)⟩]`.
pub fn bismut_elworthy_gradient(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    t: f64,
    x0: &[f64],
    y: &[f64],
    mc: &McConfig,
) -> Result<McEstimate> {
    let m = horizon_model(model, t)?;
    require_bounded_inverse(coeffs, &m)?;
    check_dim(m.dim(), x0.len())?;
    check_dim(m.dim(), y.len())?;
    phi.validate(m.dim())?;
    let q = m.wiener_variances();
    let est = accumulate(mc.n_paths, 1, mc.seed, |i, row| {
        let noise = sample_noise(&m, mc.n_steps, i, mc.seed)?;
        let base = simulate_path(&m, coeffs, x0, &noise)?;
        let v = first_variation(&m, coeffs, &base, y, &noise)?;
        let weight = malliavin_weight(coeffs, q, &base, v.record(), &noise)?;
        row[0] = phi.value(base.final_state()) * weight / t;
        Ok(())
    })?;
    Ok(est[0])
}

/// `(P_tφ(x0 + hy) − P_tφ(x0 − hy)) / 2h` under common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn central_difference_gradient(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    t: f64,
    x0: &[f64],
    y: &[f64],
    h: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    let m = horizon_model(model, t)?;
    check_dim(m.dim(), x0.len())?;
    check_dim(m.dim(), y.len())?;
    phi.validate(m.dim())?;
    if !(h > 0.0) {
        return Err(LabError::InvalidInput(format!("step h = {h} must be positive")));
    }
    let plus: Vec<f64> = x0.iter().zip(y).map(|(x, d)| x + h * d).collect();
    let minus: Vec<f64> = x0.iter().zip(y).map(|(x, d)| x - h * d).collect();
    let est = accumulate(mc.n_paths, 1, mc.seed, |i, row| {
        let noise = sample_noise(&m, mc.n_steps, i, mc.seed)?;
        let a = simulate_path(&m, coeffs, &plus, &noise)?;
        let b = simulate_path(&m, coeffs, &minus, &noise)?;
        row[0] = (phi.value(a.final_state()) - phi.value(b.final_state())) / (2.0 * h);
        Ok(())
    })?;
    Ok(est[0])
}

/// Bismut–Elworthy estimate against the central-difference oracle.
#[allow(clippy::too_many_arguments)]
pub fn bismut_elworthy_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    t: f64,
    x0: &[f64],
    y: &[f64],
    h: f64,
    mc: &McConfig,
) -> Result<AgreementReport> {
    let be = bismut_elworthy_gradient(model, coeffs, phi, t, x0, y, mc)?;
    let fd = central_difference_gradient(model, coeffs, phi, t, x0, y, h, mc)?;
    let mut r = AgreementReport::evaluate("bismut_elworthy", be, fd, mc.margin, 0.0);
    r.metadata.insert("t".into(), t);
    r.metadata.insert("h".into(), h);
    r.fingerprint = fingerprint(
        model,
        coeffs,
        &json!({ "check": "bismut_elworthy", "phi": phi, "t": t, "x0": x0, "y": y, "h": h, "mc": mc }),
    );
    Ok(r)
}

/// `|∂_y R_αφ(x0)| ≤ [φ]₁|y| / (α − ω₁)` with
/// `∂_y R_αφ(x0) = ∫₀^∞ e^{−αt} E⟨Dφ(u(t)), v(t)⟩ dt` truncated at `t_max`.
///
/// The integral uses the composite trapezoid rule on `n_quad` equispaced
/// nodes (odd, so the half-resolution rule gives a quadrature error
/// estimate); `mc.n_steps` must be a multiple of `n_quad − 1`.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_gradient_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    alpha: f64,
    x0: &[f64],
    y: &[f64],
    t_max: f64,
    n_quad: usize,
    mc: &McConfig,
) -> Result<InequalityReport> {
    let omega = omega1(model, coeffs);
    if !(alpha > omega) {
        return Err(LabError::Hypothesis(format!("alpha = {alpha} must exceed omega1 = {omega}")));
    }
    let lip = phi
        .lipschitz()
        .ok_or_else(|| LabError::Capability("test functional has no finite Lipschitz constant".into()))?;
    if n_quad < 3 || n_quad.is_multiple_of(2) {
        return Err(LabError::InvalidInput(format!("n_quad = {n_quad} must be odd and >= 3")));
    }
    if !mc.n_steps.is_multiple_of(n_quad - 1) {
        return Err(LabError::InvalidInput(format!(
            "n_steps = {} must be a multiple of n_quad - 1 = {}",
            mc.n_steps,
            n_quad - 1
        )));
    }
    let m = horizon_model(model, t_max)?;
    check_dim(m.dim(), x0.len())?;
    check_dim(m.dim(), y.len())?;
    phi.validate(m.dim())?;
    let stride = mc.n_steps / (n_quad - 1);
    let h = t_max / (n_quad - 1) as f64;

    let est = accumulate(mc.n_paths, 2, mc.seed, |i, row| {
        let noise = sample_noise(&m, mc.n_steps, i, mc.seed)?;
        let base = simulate_path(&m, coeffs, x0, &noise)?;
        let v = first_variation(&m, coeffs, &base, y, &noise)?;
        let mut grad = vec![0.0; m.dim()];
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for j in 0..n_quad {
            let t = j as f64 * h;
            phi.gradient(base.uniform_state(&noise, j * stride), &mut grad)?;
            let g = (-alpha * t).exp() * dot(&grad, v.uniform_state(&noise, j * stride));
            let end = j == 0 || j == n_quad - 1;
            fine += if end { 0.5 * h * g } else { h * g };
            if j % 2 == 0 {
                coarse += if end { h * g } else { 2.0 * h * g };
            }
        }
        row[0] = fine;
        row[1] = coarse;
        Ok(())
    })?;

    let gap = alpha - omega;
    let y_norm = norm(y);
    let tail = lip * y_norm * (-gap * t_max).exp() / gap;
    let quad = (est[0].mean - est[1].mean).abs();
    let rhs = lip * y_norm / gap;
    let mut r = InequalityReport::evaluate(
        "resolvent",
        est[0].abs(),
        McEstimate::exact(rhs),
        1.0,
        mc.margin,
        mc.margin * (tail + quad),
    )?;
    r.metadata.insert("alpha".into(), alpha);
    r.metadata.insert("omega1".into(), omega);
    r.metadata.insert("tail_bound".into(), tail);
    r.metadata.insert("quadrature_bound".into(), quad);
    r.metadata.insert("signed_value".into(), est[0].mean);
    r.fingerprint = fingerprint(
        model,
        coeffs,
        &json!({ "check": "resolvent", "phi": phi, "alpha": alpha, "x0": x0, "y": y,
                 "t_max": t_max, "n_quad": n_quad, "mc": mc }),
    );
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongFellerOptions {
    /// Times for the `t^{-1/2}` shape regression.
    #[serde(default = "default_sweep")]
    pub t_sweep: Vec<f64>,
    #[serde(default = "default_band")]
    pub slope_band: (f64, f64),
}

fn default_sweep() -> Vec<f64> {
    (1..=6).rev().map(|k| 0.5f64.powi(k)).collect()
}
fn default_band() -> (f64, f64) {
    (-0.8, -0.2)
}

impl Default for StrongFellerOptions {
    fn default() -> Self {
        Self { t_sweep: default_sweep(), slope_band: default_band() }
    }
}

/// `|P_tφ(x0) − P_tφ(y0)| ≤ t^{−1/2} N C |φ|_∞ |x0 − y0|` for bounded `φ`.
///
/// `N` is calibrated as `sup_s (E|∂_e u(s, x0)|²)^{1/2}` for the unit direction
/// `e ∥ y0 − x0`, and `C` is taken in the Cameron–Martin norm,
/// `sup|B⁻¹| · max_k q_k^{−1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn strong_feller_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    t: f64,
    x0: &[f64],
    y0: &[f64],
    options: &StrongFellerOptions,
    mc: &McConfig,
) -> Result<InequalityReport> {
    horizon_model(model, t)?;
    check_dim(model.dim(), x0.len())?;
    check_dim(model.dim(), y0.len())?;
    phi.validate(model.dim())?;
    let sup_phi = phi
        .sup_norm()
        .ok_or_else(|| LabError::Capability("strong Feller bound needs a bounded test functional".into()))?;
    let c_inv = require_bounded_inverse(coeffs, model)?;
    let q_min = model.wiener_variances().iter().copied().fold(f64::INFINITY, f64::min);
    let c_eff = c_inv / q_min.sqrt();
    let gap: f64 = x0.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let fp = fingerprint(
        model,
        coeffs,
        &json!({ "check": "strong_feller", "phi": phi, "t": t, "x0": x0, "y0": y0, "options": options, "mc": mc }),
    );

    let difference = |s: f64| -> Result<McEstimate> {
        let m = horizon_model(model, s)?;
        let est = accumulate(mc.n_paths, 1, mc.seed, |i, row| {
            let noise = sample_noise(&m, mc.n_steps, i, mc.seed)?;
            let a = simulate_path(&m, coeffs, x0, &noise)?;
            let b = simulate_path(&m, coeffs, y0, &noise)?;
            row[0] = phi.value(a.final_state()) - phi.value(b.final_state());
            Ok(())
        })?;
        Ok(est[0].abs())
    };

    if gap == 0.0 {
        let mut r = InequalityReport::evaluate("strong_feller", McEstimate::exact(0.0), McEstimate::exact(0.0), 1.0, mc.margin, 0.0)?;
        r.fingerprint = fp;
        return Ok(r);
    }

    let t_cal = options.t_sweep.iter().copied().fold(t, f64::max);
    let n_emp = {
        let m = horizon_model(model, t_cal)?;
        let dir: Vec<f64> = y0.iter().zip(x0).map(|(b, a)| (b - a) / gap).collect();
        let n = mc.n_steps;
        let sq = accumulate(mc.n_paths, n + 1, mc.seed, |i, row| {
            let noise = sample_noise(&m, n, i, mc.seed)?;
            let base = simulate_path(&m, coeffs, x0, &noise)?;
            let v = first_variation(&m, coeffs, &base, &dir, &noise)?;
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = v.uniform_state(&noise, k).iter().map(|x| x * x).sum();
            }
            Ok(())
        })?;
        sq.iter().map(|e| e.mean).fold(0.0, f64::max).sqrt()
    };
    let bound = |s: f64| n_emp * c_eff * sup_phi * gap / s.sqrt();

    let lhs = difference(t)?;
    let mut r = InequalityReport::evaluate("strong_feller", lhs, McEstimate::exact(bound(t)), 1.0, mc.margin, 0.0)?;
    let scale = sup_phi * gap;
    let mut sweep_ok = true;
    for &s in &options.t_sweep {
        let e = difference(s)?;
        sweep_ok &= e.mean <= bound(s) + mc.margin * e.stderr;
        r.series.push(SeriesPoint { x: s, estimate: e.scale(1.0 / scale), reference: Some(bound(s) / scale) });
    }
    r.metadata.insert("n_emp".into(), n_emp);
    r.metadata.insert("c_eff".into(), c_eff);
    r.metadata.insert("t".into(), t);
    if r.series.len() >= 2 {
        let xs: Vec<f64> = r.series.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = r.series.iter().map(|p| p.estimate.mean).collect();
        let slope = loglog_slope(&xs, &ys);
        let (lo, hi) = options.slope_band;
        r.metadata.insert("slope".into(), slope);
        r.metadata.insert("slope_lo".into(), lo);
        r.metadata.insert("slope_hi".into(), hi);
        sweep_ok &= (lo..=hi).contains(&slope);
    }
    r.metadata.insert("sweep_passed".into(), f64::from(u8::from(sweep_ok)));
    r.passed = r.check() && sweep_ok;
    r.fingerprint = fp;
    Ok(r)
}
