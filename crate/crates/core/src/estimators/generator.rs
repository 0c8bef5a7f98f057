use serde_json::json;

use super::{fingerprint, McConfig, SeriesPoint, SeriesReport};
use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::functional::TestFunctional;
use crate::mc::{accumulate, loglog_slope};
use crate::noise::sample_noise;
use crate::solver::simulate_path;
use crate::spectral::{dot, DiagonalModel};

/// Kolmogorov generator
///
/// `Lφ(x) = ⟨Ax + f(x), Dφ⟩ + ½ Σ_k q_k σ_k(x)² ∂²_kφ
///         + ∫ [φ(x + G(x,z)) − φ(x) − ⟨Dφ, G(x,z)⟩] m(dz)`
///
/// with the mark integral taken from `quad_nodes` nodes of the mark law when
/// given, otherwise from the coefficient set's configured rule.
pub fn generator_apply(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    x: &[f64],
    quad_nodes: Option<usize>,
) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    phi.validate(model.dim())?;
    let d = x.len();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d];
    phi.gradient(x, &mut grad)?;
    phi.hessian_diag(x, &mut hess)?;

    let mut drift = model.generator_apply(x)?;
    let mut f = vec![0.0; d];
    coeffs.drift(x, &mut f);
    for (a, b) in drift.iter_mut().zip(&f) {
        *a += b;
    }
    let transport = dot(&drift, &grad);

    let mut sigma = vec![0.0; d];
    coeffs.diffusion_diag(x, &mut sigma);
    let diffusion: f64 = (0..d)
        .map(|k| 0.5 * model.wiener_variances()[k] * sigma[k] * sigma[k] * hess[k])
        .sum();

    let mut g = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut jump_term = |z: f64| {
        coeffs.jump(x, z, &mut g);
        for k in 0..d {
            shifted[k] = x[k] + g[k];
        }
        phi.value(&shifted) - phi.value(x) - dot(&grad, &g)
    };
    let jumps = if !coeffs.has_jumps() {
        0.0
    } else if let Some(n) = quad_nodes {
        if n == 0 {
            return Err(LabError::InvalidInput("quadrature needs at least one node".into()));
        }
        let rate = model.jump_rate();
        model.mark_law().quadrature(n).into_iter().map(|(z, w)| rate * w * jump_term(z)).sum()
    } else {
        coeffs.mark_integral(jump_term)?
    };
    Ok(transport + diffusion + jumps)
}

/// Short-time consistency `(P_hφ(x) − φ(x))/h → Lφ(x)`: the error must decay
/// with log-log slope at least `min_slope` along `h_ladder`. Each `h` uses
/// `mc.n_steps` uniform steps.
pub fn generator_consistency_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    phi: &TestFunctional,
    x: &[f64],
    h_ladder: &[f64],
    min_slope: f64,
    mc: &McConfig,
) -> Result<SeriesReport> {
    if h_ladder.len() < 2 || h_ladder.iter().any(|h| !(*h > 0.0)) {
        return Err(LabError::InvalidInput("h ladder needs at least two positive entries".into()));
    }
    let exact = generator_apply(model, coeffs, phi, x, None)?;
    let phi_x = phi.value(x);
    let mut points = Vec::with_capacity(h_ladder.len());
    for &h in h_ladder {
        let m = model.with_horizon(h)?;
        let est = accumulate(mc.n_paths, 1, mc.seed, |i, row| {
            let noise = sample_noise(&m, mc.n_steps, i, mc.seed)?;
            let path = simulate_path(&m, coeffs, x, &noise)?;
            row[0] = (phi.value(path.final_state()) - phi_x) / h;
            Ok(())
        })?;
        points.push(SeriesPoint { x: h, estimate: est[0], reference: Some(exact) });
    }
    let errors: Vec<f64> = points.iter().map(|p| (p.estimate.mean - exact).abs()).collect();
    let slope = loglog_slope(h_ladder, &errors);
    let mut report = SeriesReport {
        name: "generator".into(),
        passed: slope >= min_slope,
        slope,
        slope_band: (min_slope, f64::MAX),
        points,
        fingerprint: fingerprint(
            model,
            coeffs,
            &json!({ "check": "generator", "phi": phi, "x": x, "h": h_ladder, "mc": mc }),
        ),
        metadata: Default::default(),
    };
    report.metadata.insert("generator".into(), exact);
    report.metadata.insert("last_error".into(), *errors.last().expect("non-empty"));
    Ok(report)
}
