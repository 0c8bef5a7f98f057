use serde_json::json;

use super::{fingerprint, InequalityReport, McConfig, SeriesPoint};
use crate::coefficients::{omega1, omega1_additive, CoefficientSet};
use crate::error::{check_dim, LabError, Result};
use crate::mc::{accumulate, McEstimate};
use crate::noise::sample_noise;
use crate::solver::coupled_paths;
use crate::spectral::DiagonalModel;

/// Relative allowance for floating-point roundoff in deterministic cases.
const ROUNDOFF: f64 = 1e-12;

/// `E|u(t,x0) − u(t,y0)| ≤ e^{ω₁t}|x0 − y0|` on the uniform grid.
pub fn lipschitz_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    y0: &[f64],
    mc: &McConfig,
) -> Result<InequalityReport> {
    let rate = omega1(model, coeffs);
    difference_moment_report("lipschitz", model, coeffs, 1.0, rate, x0, y0, mc)
}

/// Additive noise: `E|u(t,x0) − u(t,y0)|^p ≤ e^{p(η+[f]₁)t}|x0 − y0|^p`.
pub fn additive_moment_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    p: f64,
    x0: &[f64],
    y0: &[f64],
    mc: &McConfig,
) -> Result<InequalityReport> {
    if !coeffs.is_additive() {
        return Err(LabError::Capability(
            "additive moment bound needs state-independent B and G".into(),
        ));
    }
    if !(p >= 2.0) {
        return Err(LabError::InvalidInput(format!("p = {p} must be >= 2")));
    }
    let rate = omega1_additive(model, coeffs);
    difference_moment_report("additive_moment", model, coeffs, p, rate, x0, y0, mc)
}

#[allow(clippy::too_many_arguments)]
fn difference_moment_report(
    name: &str,
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    p: f64,
    rate: f64,
    x0: &[f64],
    y0: &[f64],
    mc: &McConfig,
) -> Result<InequalityReport> {
    check_dim(model.dim(), x0.len())?;
    check_dim(model.dim(), y0.len())?;
    let gap: f64 = x0.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if gap == 0.0 {
        return Err(LabError::InvalidInput(format!("{name}: x0 = y0 is a degenerate scenario")));
    }
    let n = mc.n_steps;
    let per_time = accumulate(mc.n_paths, n + 1, mc.seed, |i, row| {
        let noise = sample_noise(model, n, i, mc.seed)?;
        let (a, b) = coupled_paths(model, coeffs, x0, y0, &noise)?;
        for (t, slot) in row.iter_mut().enumerate() {
            let (ua, ub) = (a.uniform_state(&noise, t), b.uniform_state(&noise, t));
            let dist: f64 = ua.iter().zip(ub).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            *slot = dist.powf(p);
        }
        Ok(())
    })?;

    let horizon = model.horizon();
    let time = |i: usize| horizon * i as f64 / n as f64;
    let bound = |i: usize| (p * rate * time(i)).exp() * gap.powf(p);
    // the time closest to violation decides the verdict for the whole grid
    let binding = (0..=n)
        .max_by(|&i, &j| {
            let excess = |k: usize| {
                let e = per_time[k];
                (e.mean - mc.margin * e.stderr - bound(k)) / bound(k)
            };
            excess(i).total_cmp(&excess(j))
        })
        .expect("grid is non-empty");
    let (t_max_lhs, max_lhs) = (0..=n)
        .map(|i| (time(i), per_time[i].mean))
        .fold((0.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });

    let rhs = bound(binding);
    let mut report = InequalityReport::evaluate(
        name,
        per_time[binding],
        McEstimate::exact(rhs),
        1.0,
        mc.margin,
        ROUNDOFF * rhs,
    )?;
    report.metadata.insert("t_binding".into(), time(binding));
    report.metadata.insert("max_lhs".into(), max_lhs);
    report.metadata.insert("t_max_lhs".into(), t_max_lhs);
    report.metadata.insert("omega".into(), rate);
    report.metadata.insert("p".into(), p);
    report.series = (0..=n)
        .map(|i| SeriesPoint { x: time(i), estimate: per_time[i], reference: Some(bound(i)) })
        .collect();
    report.fingerprint = fingerprint(
        model,
        coeffs,
        &json!({ "check": name, "p": p, "x0": x0, "y0": y0, "mc": mc }),
    );
    Ok(report)
}
