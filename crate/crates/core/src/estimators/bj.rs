use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fingerprint, InequalityReport, McConfig};
use crate::coefficients::CoefficientSet;
use crate::error::{check_dim, LabError, Result};
use crate::mc::{accumulate, McEstimate};
use crate::noise::sample_noise;
use crate::solver::simulate_path;
use crate::spectral::{norm, DiagonalModel};

/// Integrand `g(s, z)` of the compensated Poisson integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BjIntegrand {
    /// `g(s, z) = G(u(s-), z)` along the solution started at `x0`.
    AlongPath { x0: Vec<f64> },
    /// `g(s, z) = value`, deterministic and mark-independent.
    Constant { value: Vec<f64> },
}

/// Maximal inequality for `X(t) = ∫₀ᵗ∫ S(t-s) g(s, z) μ̄(ds, dz)` with
/// `S = e^{·A}` when `convolution`, else the identity:
///
/// `E sup_t |X(t)|^p ≤ N E ∫₀ᵀ (|g(s)|^p_{L_p(m)} + |g(s)|^p_{L₂(m)}) ds`.
///
/// `constant` is the `N` the report is checked against.
pub fn bj_inequality_report(
    model: &DiagonalModel,
    coeffs: &CoefficientSet,
    p: f64,
    integrand: &BjIntegrand,
    convolution: bool,
    constant: f64,
    mc: &McConfig,
) -> Result<InequalityReport> {
    if !(p >= 2.0) {
        return Err(LabError::InvalidInput(format!("p = {p} must be >= 2")));
    }
    let d = model.dim();
    let rate = model.jump_rate();
    let horizon = model.horizon();
    let (BjIntegrand::AlongPath { x0: v } | BjIntegrand::Constant { value: v }) = integrand;
    check_dim(d, v.len())?;

    let rows = accumulate(mc.n_paths, 2, mc.seed, |i, row| {
        let noise = sample_noise(model, mc.n_steps, i, mc.seed)?;
        let path = match integrand {
            BjIntegrand::AlongPath { x0 } => Some(simulate_path(model, coeffs, x0, &noise)?),
            BjIntegrand::Constant { .. } => None,
        };
        let mut x = vec![0.0; d];
        let mut comp = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut sup = 0.0f64;
        let mut rhs = 0.0;
        let mut next = 0;
        for n in 0..noise.n_intervals() {
            let (t0, t1) = noise.interval(n);
            let delta = t1 - t0;
            match (integrand, &path) {
                (BjIntegrand::AlongPath { .. }, Some(path)) => {
                    let u = path.state(n);
                    coeffs.compensator(u, &mut comp)?;
                    let (lp, l2) = coeffs.jump_norms(u, p)?;
                    rhs += delta * (lp + l2.powf(0.5 * p));
                }
                (BjIntegrand::Constant { value }, _) => {
                    for (c, v) in comp.iter_mut().zip(value) {
                        *c = rate * v;
                    }
                }
                _ => unreachable!(),
            }
            for (xk, ck) in x.iter_mut().zip(&comp) {
                *xk -= delta * ck;
            }
            if convolution {
                model.semigroup_in_place(delta, &mut x);
            }
            sup = sup.max(norm(&x));
            while next < noise.jump_slots().len() && noise.jump_slots()[next] == n {
                match (integrand, &path) {
                    (BjIntegrand::AlongPath { .. }, Some(path)) => {
                        coeffs.jump(path.pre_jump_state(next), noise.jumps()[next].mark, &mut g);
                    }
                    (BjIntegrand::Constant { value }, _) => g.copy_from_slice(value),
                    _ => unreachable!(),
                }
                for (xk, gk) in x.iter_mut().zip(&g) {
                    *xk += gk;
                }
                sup = sup.max(norm(&x));
                next += 1;
            }
        }
        row[0] = sup.powf(p);
        row[1] = rhs;
        Ok(())
    })?;

    let lhs = rows[0];
    let rhs = match integrand {
        BjIntegrand::Constant { value } => {
            let n = norm(value);
            McEstimate::exact(horizon * (rate * n.powf(p) + (rate * n * n).powf(0.5 * p)))
        }
        BjIntegrand::AlongPath { .. } => rows[1],
    };
    let name = if convolution { "bj_convolution" } else { "bj" };
    let mut report = InequalityReport::evaluate(name, lhs, rhs, constant, mc.margin, 0.0)?;
    report.metadata.insert("p".into(), p);
    report.metadata.insert("horizon".into(), horizon);
    report.metadata.insert("ratio_stderr".into(), report.ratio_stderr());
    report.fingerprint = fingerprint(
        model,
        coeffs,
        &json!({ "check": name, "p": p, "integrand": integrand, "mc": mc }),
    );
    Ok(report)
}
