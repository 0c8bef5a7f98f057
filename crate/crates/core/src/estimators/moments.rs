use serde_json::json;

use super::{fingerprint, AgreementReport, McConfig, SeriesPoint, SeriesReport};
use crate::coefficients::{CoefficientSet, LinearStructure};
use crate::error::{check_dim, LabError, Result};
use crate::mc::{accumulate, loglog_slope, McEstimate};
use crate::noise::sample_noise;
use crate::solver::simulate_path;
use crate::spectral::DiagonalModel;

fn linear(coeffs: &CoefficientSet) -> Result<LinearStructure> {
    coeffs.linear_structure().ok_or_else(|| {
        LabError::Capability("closed-form moments need linear drift and additive noise".into())
    })
}

/// `∫₀ᵀ e^{c(T−s)} ds`
fn exp_integral(c: f64, t: f64) -> f64 {
    if c == 0.0 {
        t
    } else {
        (c * t).exp_m1() / c
    }
}

/// Closed-form mean and variance of mode `k` for linear drift with additive
/// Wiener and jump noise.
pub fn ou_moments(model: &DiagonalModel, coeffs: &CoefficientSet, x0: &[f64], k: usize) -> Result<(f64, f64)> {
    let lin = linear(coeffs)?;
    let t = model.horizon();
    let c = model.eigenvalues()[k] + lin.drift[k];
    let (m1, m2) = coeffs.mark_moments();
    let jump2 = lin.g[k] * lin.g[k] + 2.0 * lin.g[k] * lin.h[k] * m1 + lin.h[k] * lin.h[k] * m2;
    let intensity = model.wiener_variances()[k] * lin.b[k] * lin.b[k] + model.jump_rate() * jump2;
    Ok(((c * t).exp() * x0[k], intensity * exp_integral(2.0 * c, t)))
}

/// Monte Carlo mean and variance of `u(T)_index` against the closed form.
pub fn ou_moment_reports(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    index: usize,
    mc: &McConfig,
) -> Result<Vec<AgreementReport>> {
    check_dim(model.dim(), x0.len())?;
    if index >= model.dim() {
        return Err(LabError::config("checks.moments.index", "out of range"));
    }
    let (mean, var) = ou_moments(model, coeffs, x0, index)?;
    let est = accumulate(mc.n_paths, 2, mc.seed, |i, row| {
        let noise = sample_noise(model, mc.n_steps, i, mc.seed)?;
        let u = simulate_path(model, coeffs, x0, &noise)?.final_state()[index];
        row[0] = u;
        // centred at the exact mean, so the sample mean is unbiased for the variance
        row[1] = (u - mean) * (u - mean);
        Ok(())
    })?;
    let fp = fingerprint(model, coeffs, &json!({ "check": "moments", "x0": x0, "index": index, "mc": mc }));
    let mut out = vec![
        AgreementReport::evaluate("moments_mean", est[0], McEstimate::exact(mean), mc.margin, 0.0),
        AgreementReport::evaluate("moments_variance", est[1], McEstimate::exact(var), mc.margin, 0.0),
    ];
    for r in &mut out {
        r.fingerprint = fp.clone();
        r.metadata.insert("dt".into(), model.horizon() / mc.n_steps as f64);
    }
    Ok(out)
}

/// Weak error `|E u_N − E u(T)|` of mode `index` at the configured step,
/// passing when it is within `budget` (plus the Monte Carlo margin).
///
/// The estimator subtracts the mean-zero control variate
/// `Σ_n e^{c(T−t_n)} b ΔW_n + Σ_i e^{c(T−τ_i)}(g + z_i h) − λ E[g + zh] ∫₀ᵀ e^{c(T−s)} ds`,
/// which removes almost all of the sampling noise without changing the
/// expectation, so biases far below the plain Monte Carlo error are resolved.
pub fn weak_error_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    index: usize,
    budget: f64,
    mc: &McConfig,
) -> Result<AgreementReport> {
    check_dim(model.dim(), x0.len())?;
    if index >= model.dim() {
        return Err(LabError::config("checks.weak_error.index", "out of range"));
    }
    let lin = linear(coeffs)?;
    let (mean, _) = ou_moments(model, coeffs, x0, index)?;
    let t_end = model.horizon();
    let c = model.eigenvalues()[index] + lin.drift[index];
    let (m1, _) = coeffs.mark_moments();
    let (b, g, h) = (lin.b[index], lin.g[index], lin.h[index]);
    let compensator = model.jump_rate() * (g + h * m1) * exp_integral(c, t_end);

    let est = accumulate(mc.n_paths, 1, mc.seed, |i, row| {
        let noise = sample_noise(model, mc.n_steps, i, mc.seed)?;
        let u = simulate_path(model, coeffs, x0, &noise)?.final_state()[index];
        let mut cv = -compensator;
        for n in 0..noise.n_intervals() {
            let (t0, _) = noise.interval(n);
            cv += (c * (t_end - t0)).exp() * b * noise.increment(n)[index];
        }
        for j in noise.jumps() {
            cv += (c * (t_end - j.time)).exp() * (g + j.mark * h);
        }
        row[0] = u - cv;
        Ok(())
    })?;
    let mut r = AgreementReport::evaluate("weak_error", est[0], McEstimate::exact(mean), mc.margin, budget);
    r.metadata.insert("dt".into(), t_end / mc.n_steps as f64);
    r.metadata.insert("weak_error".into(), r.discrepancy());
    r.fingerprint = fingerprint(model, coeffs, &json!({ "check": "weak_error", "x0": x0, "index": index, "mc": mc }));
    Ok(r)
}

/// Weak-order regression over a ladder of uniform step counts; the slope of
/// the weak error against `Δt` must lie in `band`.
pub fn weak_error_study(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    index: usize,
    steps: &[usize],
    band: (f64, f64),
    mc: &McConfig,
) -> Result<SeriesReport> {
    if steps.len() < 2 {
        return Err(LabError::InvalidInput("weak-order study needs at least two step counts".into()));
    }
    let mut points = Vec::with_capacity(steps.len());
    for &n in steps {
        let r = weak_error_report(model, coeffs, x0, index, 0.0, &McConfig { n_steps: n, ..*mc })?;
        let err = McEstimate { mean: r.discrepancy(), ..r.estimate };
        points.push(SeriesPoint { x: model.horizon() / n as f64, estimate: err, reference: Some(r.reference.mean) });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.mean).collect();
    let slope = loglog_slope(&xs, &ys);
    Ok(SeriesReport {
        name: "weak_order".into(),
        passed: (band.0..=band.1).contains(&slope),
        slope,
        slope_band: band,
        points,
        fingerprint: fingerprint(model, coeffs, &json!({ "check": "weak_order", "x0": x0, "steps": steps, "mc": mc })),
        metadata: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::builtin_coefficients;
    use crate::marks::MarkLaw;

    fn ou() -> (DiagonalModel, CoefficientSet) {
        let m = DiagonalModel::scalar(-1.0, 1.0, 2.0, MarkLaw::PointMass { at: 0.0 }, 1.0).unwrap();
        let c = builtin_coefficients("additive", &json!({"b": 1.0, "g": 1.0}), &m).unwrap();
        (m, c)
    }

    #[test]
    fn closed_form_moments() {
        let (m, c) = ou();
        let (mean, var) = ou_moments(&m, &c, &[1.0], 0).unwrap();
        assert!((mean - (-1.0f64).exp()).abs() < 1e-15);
        assert!((var - 1.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn small_run_agrees() {
        let (m, c) = ou();
        let mc = McConfig { n_paths: 5000, n_steps: 200, seed: 2, margin: 3.0 };
        for r in ou_moment_reports(&m, &c, &[1.0], 0, &mc).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn control_variate_is_sharp() {
        let (m, c) = ou();
        let mc = McConfig { n_paths: 2000, n_steps: 16, seed: 2, margin: 3.0 };
        let coarse = weak_error_report(&m, &c, &[1.0], 0, 0.0, &mc).unwrap();
        assert!(coarse.estimate.stderr < 0.05 * coarse.discrepancy(), "{coarse:?}");
        assert!(!coarse.passed);
        let fine = weak_error_report(&m, &c, &[1.0], 0, 0.0, &McConfig { n_steps: 128, ..mc }).unwrap();
        assert!(fine.discrepancy() < coarse.discrepancy());
    }

    #[test]
    fn nonlinear_rejected() {
        let m = DiagonalModel::heat(1, 1.0, 0.0, MarkLaw::Gaussian, 1.0).unwrap();
        let c = builtin_coefficients("nemytskii-sin", &json!({"c": 1.0}), &m).unwrap();
        assert!(matches!(ou_moments(&m, &c, &[1.0], 0), Err(LabError::Capability(_))));
    }
}
