use serde_json::json;

use super::{fingerprint, AgreementReport, McConfig};
use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::mc::accumulate;
use crate::noise::sample_noise;
use crate::sensitivity::{first_variation, second_variation};
use crate::solver::simulate_path;
use crate::spectral::DiagonalModel;

/// Compares the second variation with and without the diffusion terms
/// `DB(u)w dW + D²B(u)(v₁, v₂) dW` on matched noise: the report carries the
/// paired difference of `w(T)_index` and passes when it is within the Monte
/// Carlo margin plus `tolerance`. Both variants coincide for additive noise.
#[allow(clippy::too_many_arguments)]
pub fn second_variation_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    y1: &[f64],
    y2: &[f64],
    index: usize,
    tolerance: f64,
    mc: &McConfig,
) -> Result<AgreementReport> {
    for v in [x0, y1, y2] {
        check_dim(model.dim(), v.len())?;
    }
    if index >= model.dim() {
        return Err(LabError::config("run.index", "out of range"));
    }
    let est = accumulate(mc.n_paths, 3, mc.seed, |i, row| {
        let noise = sample_noise(model, mc.n_steps, i, mc.seed)?;
        let base = simulate_path(model, coeffs, x0, &noise)?;
        let v1 = first_variation(model, coeffs, &base, y1, &noise)?;
        let v2 = first_variation(model, coeffs, &base, y2, &noise)?;
        let full = second_variation(model, coeffs, &base, &v1, &v2, &noise, false)?.final_state()[index];
        let literal = second_variation(model, coeffs, &base, &v1, &v2, &noise, true)?.final_state()[index];
        row[0] = full;
        row[1] = literal;
        row[2] = full - literal;
        Ok(())
    })?;
    let mut r = AgreementReport::evaluate("second_variation", est[2], crate::mc::McEstimate::exact(0.0), mc.margin, tolerance);
    r.metadata.insert("full_mean".into(), est[0].mean);
    r.metadata.insert("full_stderr".into(), est[0].stderr);
    r.metadata.insert("literal_mean".into(), est[1].mean);
    r.metadata.insert("literal_stderr".into(), est[1].stderr);
    r.fingerprint = fingerprint(
        model,
        coeffs,
        &json!({ "check": "second_variation", "x0": x0, "y1": y1, "y2": y2, "index": index, "mc": mc }),
    );
    Ok(r)
}
