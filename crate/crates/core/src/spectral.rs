//! Galerkin-truncated state space: a diagonal generator `A` acting on the
//! first `d` eigenmodes, together with the noise covariance and jump law.
//!
//! Everything here is exact: the semigroup is `e^{tA} = diag(e^{a_k t})` and
//! the Yosida approximation is `diag(λ a_k / (λ - a_k))`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::marks::MarkLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalModel {
    eigenvalues: Vec<f64>,
    eta: f64,
    wiener_variances: Vec<f64>,
    jump_rate: f64,
    mark_law: MarkLaw,
    horizon: f64,
}

impl DiagonalModel {
    pub fn new(
        eigenvalues: Vec<f64>,
        eta: f64,
        wiener_variances: Vec<f64>,
        jump_rate: f64,
        mark_law: MarkLaw,
        horizon: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(LabError::config("model.dim", "must be positive"));
        }
        check_dim(eigenvalues.len(), wiener_variances.len())?;
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(LabError::config("model.eta", "must be finite and >= 0"));
        }
        if let Some((k, a)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a > eta)
        {
            return Err(LabError::config(
                format!("model.eigenvalues[{k}]"),
                format!("a_k = {a} violates a_k <= eta = {eta}"),
            ));
        }
        if let Some(k) = wiener_variances
            .iter()
            .position(|q| !(q.is_finite() && *q >= 0.0))
        {
            return Err(LabError::config(
                format!("model.wiener_variances[{k}]"),
                "must be finite and >= 0",
            ));
        }
        if !(jump_rate.is_finite() && jump_rate >= 0.0) {
            return Err(LabError::config("model.jump_rate", "must be finite and >= 0"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::config("model.horizon", "must be positive"));
        }
        mark_law.validate()?;
        Ok(Self {
            eigenvalues,
            eta,
            wiener_variances,
            jump_rate,
            mark_law,
            horizon,
        })
    }

    /// Heat-equation spectrum `a_k = -π² k²`, `η = 0`, with `q_k = q`.
    pub fn heat(dim: usize, q: f64, jump_rate: f64, mark_law: MarkLaw, horizon: f64) -> Result<Self> {
        let eig = heat_spectrum(dim);
        Self::new(eig, 0.0, vec![q; dim], jump_rate, mark_law, horizon)
    }

    /// One-mode model `du = a u dt + ...`, with `η = max(a, 0)`.
    pub fn scalar(a: f64, q: f64, jump_rate: f64, mark_law: MarkLaw, horizon: f64) -> Result<Self> {
        Self::new(vec![a], a.max(0.0), vec![q], jump_rate, mark_law, horizon)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn wiener_variances(&self) -> &[f64] {
        &self.wiener_variances
    }
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }
    pub fn mark_law(&self) -> &MarkLaw {
        &self.mark_law
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut m = self.clone();
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::InvalidInput(format!("horizon {horizon} must be positive")));
        }
        m.horizon = horizon;
        Ok(m)
    }

    /// Same model with `A` replaced by its Yosida approximation `A_λ`.
    /// The shift `η` is kept: `λ a/(λ-a) <= η` whenever `a <= η` and `λ > η`.
    pub fn yosida(&self, lambda: f64) -> Result<Self> {
        let eig = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &a)| yosida_entry(lambda, a, k))
            .collect::<Result<Vec<_>>>()?;
        let eta = eig.iter().copied().fold(self.eta, f64::max);
        let mut m = self.clone();
        m.eigenvalues = eig;
        m.eta = eta;
        Ok(m)
    }

    /// `e^{tA} x`
    pub fn semigroup_apply(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        if !(t >= 0.0) {
            return Err(LabError::InvalidInput(format!("negative time {t}")));
        }
        Ok(self
            .eigenvalues
            .iter()
            .zip(x)
            .map(|(a, xk)| (a * t).exp() * xk)
            .collect())
    }

    /// In-place `x ← e^{tA} x` without validation, for the inner loops.
    #[inline]
    pub(crate) fn semigroup_in_place(&self, t: f64, x: &mut [f64]) {
        for (a, xk) in self.eigenvalues.iter().zip(x.iter_mut()) {
            *xk *= (a * t).exp();
        }
    }

    /// `A_λ x = λ A (λ - A)^{-1} x`
    pub fn yosida_apply(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        self.eigenvalues
            .iter()
            .zip(x)
            .enumerate()
            .map(|(k, (&a, xk))| Ok(yosida_entry(lambda, a, k)? * xk))
            .collect()
    }

    /// `|e^{t1 A} x - e^{t2 A} x|`
    pub fn semigroup_difference_norm(&self, t1: f64, t2: f64, x: &[f64]) -> Result<f64> {
        let u = self.semigroup_apply(t1, x)?;
        let v = self.semigroup_apply(t2, x)?;
        Ok(norm(&u.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>()))
    }

    /// `A x`
    pub fn generator_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eigenvalues.iter().zip(x).map(|(a, xk)| a * xk).collect())
    }
}

fn yosida_entry(lambda: f64, a: f64, k: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::InvalidInput(format!(
            "Yosida parameter must be positive, got {lambda}"
        )));
    }
    if lambda == a {
        return Err(LabError::SingularResolvent { lambda, index: k });
    }
    Ok(lambda * a / (lambda - a))
}

pub fn heat_spectrum(dim: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    (1..=dim).map(|k| -pi2 * (k * k) as f64).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
