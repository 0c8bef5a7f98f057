//! Sampling laws on the (scalar) mark space and the quadrature rules used to
//! integrate against them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Probability law `ν` of a single mark. The intensity measure is `m = λ_m · ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum MarkLaw {
    PointMass { at: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Standard normal marks.
    Gaussian,
    /// Finite mixture of point masses; weights are normalised on validation.
    Mixture { points: Vec<f64>, weights: Vec<f64> },
}

impl Default for MarkLaw {
    fn default() -> Self {
        MarkLaw::PointMass { at: 1.0 }
    }
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkLaw::PointMass { at } if !at.is_finite() => {
                Err(LabError::config("model.mark_law.at", "must be finite"))
            }
            MarkLaw::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => Err(
                LabError::config("model.mark_law", "uniform law needs finite lo < hi"),
            ),
            MarkLaw::Mixture { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(LabError::config(
                        "model.mark_law",
                        "mixture needs equally many (non-zero) points and weights",
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return Err(LabError::config(
                        "model.mark_law.weights",
                        "weights must be nonnegative with positive sum",
                    ));
                }
                if points.iter().any(|p| !p.is_finite()) {
                    return Err(LabError::config("model.mark_law.points", "must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MarkLaw::PointMass { at } => *at,
            MarkLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MarkLaw::Gaussian => StandardNormal.sample(rng),
            MarkLaw::Mixture { points, weights } => {
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                for (p, w) in points.iter().zip(weights) {
                    if target < *w {
                        return *p;
                    }
                    target -= w;
                }
                *points.last().expect("validated non-empty mixture")
            }
        }
    }

    /// `E_ν[z]`
    pub fn mean(&self) -> f64 {
        match self {
            MarkLaw::PointMass { at } => *at,
            MarkLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            MarkLaw::Gaussian => 0.0,
            MarkLaw::Mixture { .. } => self.expect_exact(|z| z),
        }
    }

    /// `E_ν[z²]`
    pub fn second_moment(&self) -> f64 {
        match self {
            MarkLaw::PointMass { at } => at * at,
            MarkLaw::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            MarkLaw::Gaussian => 1.0,
            MarkLaw::Mixture { .. } => self.expect_exact(|z| z * z),
        }
    }

    fn expect_exact(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.quadrature(1).iter().map(|(z, w)| w * g(*z)).sum()
    }

    /// Nodes and probability weights (summing to one) approximating `E_ν`.
    ///
    /// Atomic laws are integrated exactly whatever `n_nodes` is; the uniform
    /// law uses Gauss-Legendre and the Gaussian law Gauss-Hermite, both exact
    /// for polynomials of degree `2 n_nodes - 1`.
    pub fn quadrature(&self, n_nodes: usize) -> Vec<(f64, f64)> {
        let n = n_nodes.max(1);
        match self {
            MarkLaw::PointMass { at } => vec![(*at, 1.0)],
            MarkLaw::Mixture { points, weights } => {
                let total: f64 = weights.iter().sum();
                points
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| (*p, w / total))
                    .collect()
            }
            MarkLaw::Uniform { lo, hi } => gauss_legendre(n)
                .into_iter()
                .map(|(x, w)| (0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * w))
                .collect(),
            MarkLaw::Gaussian => gauss_hermite(n)
                .into_iter()
                .map(|(x, w)| {
                    (
                        std::f64::consts::SQRT_2 * x,
                        w / std::f64::consts::PI.sqrt(),
                    )
                })
                .collect(),
        }
    }

    /// Whether [`MarkLaw::quadrature`] is exact for every integrand.
    pub fn is_atomic(&self) -> bool {
        matches!(self, MarkLaw::PointMass { .. } | MarkLaw::Mixture { .. })
    }
}

/// Gauss-Legendre nodes/weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out[i] = (-z, w);
        out[n - 1 - i] = (z, w);
    }
    out
}

/// Gauss-Hermite nodes/weights for the weight `exp(-x²)`.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out.reverse();
    out
}
