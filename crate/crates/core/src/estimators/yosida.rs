use serde_json::json;

use super::{fingerprint, McConfig, SeriesPoint, SeriesReport};
use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::mc::{accumulate, loglog_slope, McEstimate};
use crate::noise::sample_noise;
use crate::solver::simulate_path;
use crate::spectral::DiagonalModel;

/// Distance `sup_t (E|u_λ(t) − u(t)|²)^{1/2}` along an increasing ladder of
/// Yosida parameters, on matched noise.
///
/// Passes when each distance is no larger than its predecessor (within two
/// combined standard errors) and the last one is below `tolerance`.
pub fn yosida_convergence_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    x0: &[f64],
    ladder: &[f64],
    tolerance: f64,
    mc: &McConfig,
) -> Result<SeriesReport> {
    check_dim(model.dim(), x0.len())?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidInput("lambda ladder must be non-empty and increasing".into()));
    }
    let approximations = ladder.iter().map(|&l| model.yosida(l)).collect::<Result<Vec<_>>>()?;
    let n = mc.n_steps;
    let width = n + 1;
    let sq = accumulate(mc.n_paths, ladder.len() * width, mc.seed, |i, row| {
        let noise = sample_noise(model, n, i, mc.seed)?;
        let base = simulate_path(model, coeffs, x0, &noise)?;
        for (j, approx) in approximations.iter().enumerate() {
            let path = simulate_path(approx, coeffs, x0, &noise)?;
            for t in 0..width {
                let (a, b) = (path.uniform_state(&noise, t), base.uniform_state(&noise, t));
                row[j * width + t] = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
            }
        }
        Ok(())
    })?;

    let points: Vec<SeriesPoint> = ladder
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let cols = &sq[j * width..(j + 1) * width];
            let worst = cols.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).expect("non-empty");
            let dist = worst.mean.max(0.0).sqrt();
            let stderr = if dist > 0.0 { worst.stderr / (2.0 * dist) } else { 0.0 };
            SeriesPoint {
                x: lambda,
                estimate: McEstimate { mean: dist, stderr, ..*worst },
                reference: None,
            }
        })
        .collect();

    let decreasing = points.windows(2).all(|w| {
        w[1].estimate.mean <= w[0].estimate.mean + 2.0 * w[0].estimate.stderr.hypot(w[1].estimate.stderr)
    });
    let strictly = points.windows(2).all(|w| w[1].estimate.mean < w[0].estimate.mean);
    let last = points.last().expect("non-empty").estimate.mean;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.mean).collect();
    let mut report = SeriesReport {
        name: "yosida".into(),
        slope: loglog_slope(&xs, &ys),
        slope_band: (f64::NEG_INFINITY, f64::INFINITY),
        passed: decreasing && last <= tolerance,
        points,
        fingerprint: fingerprint(model, coeffs, &json!({ "check": "yosida", "x0": x0, "ladder": ladder, "mc": mc })),
        metadata: Default::default(),
    };
    report.metadata.insert("tolerance".into(), tolerance);
    report.metadata.insert("strictly_decreasing".into(), f64::from(u8::from(strictly)));
    Ok(report)
}
