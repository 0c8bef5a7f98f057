//! Test functionals `φ: H → ℝ` for gradient and smoothing estimates.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctional {
    Constant { value: f64 },
    /// `φ(x) = x_index`
    Coordinate { index: usize },
    /// `φ(x) = |x|²`
    SquaredNorm,
    /// `φ(x) = sin(x_index)`
    Sine { index: usize },
    /// `φ(x) = 1 / (1 + e^{-scale x_index})`
    Sigmoid { index: usize, scale: f64 },
    /// `φ(x) = 1{x_index > threshold}`; bounded, not continuous.
    Step { index: usize, threshold: f64 },
}

impl TestFunctional {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let index = match self {
            TestFunctional::Coordinate { index }
            | TestFunctional::Sine { index }
            | TestFunctional::Sigmoid { index, .. }
            | TestFunctional::Step { index, .. } => *index,
            _ => 0,
        };
        if index >= dim {
            return Err(LabError::config("phi.index", format!("{index} out of range for dimension {dim}")));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            TestFunctional::Constant { value } => value,
            TestFunctional::Coordinate { index } => x[index],
            TestFunctional::SquaredNorm => x.iter().map(|v| v * v).sum(),
            TestFunctional::Sine { index } => x[index].sin(),
            TestFunctional::Sigmoid { index, scale } => 1.0 / (1.0 + (-scale * x[index]).exp()),
            TestFunctional::Step { index, threshold } => f64::from(u8::from(x[index] > threshold)),
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        match *self {
            TestFunctional::Constant { .. } => {}
            TestFunctional::Coordinate { index } => out[index] = 1.0,
            TestFunctional::SquaredNorm => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            }
            TestFunctional::Sine { index } => out[index] = x[index].cos(),
            TestFunctional::Sigmoid { index, scale } => {
                let s = self.value(x);
                out[index] = scale * s * (1.0 - s);
            }
            TestFunctional::Step { .. } => {
                return Err(LabError::Capability("step functional has no derivative".into()))
            }
        }
        Ok(())
    }

    /// Diagonal of the Hessian (all built-ins act coordinate-wise).
    pub fn hessian_diag(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        match *self {
            TestFunctional::Constant { .. } | TestFunctional::Coordinate { .. } => {}
            TestFunctional::SquaredNorm => out.fill(2.0),
            TestFunctional::Sine { index } => out[index] = -x[index].sin(),
            TestFunctional::Sigmoid { index, scale } => {
                let s = self.value(x);
                out[index] = scale * scale * s * (1.0 - s) * (1.0 - 2.0 * s);
            }
            TestFunctional::Step { .. } => {
                return Err(LabError::Capability("step functional has no derivative".into()))
            }
        }
        Ok(())
    }

    /// Lipschitz constant `[φ]₁`, when finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            TestFunctional::Constant { .. } => Some(0.0),
            TestFunctional::Coordinate { .. } | TestFunctional::Sine { .. } => Some(1.0),
            TestFunctional::Sigmoid { scale, .. } => Some(scale.abs() / 4.0),
            TestFunctional::SquaredNorm | TestFunctional::Step { .. } => None,
        }
    }

    /// `|φ|_∞`, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match *self {
            TestFunctional::Constant { value } => Some(value.abs()),
            TestFunctional::Sine { .. } | TestFunctional::Sigmoid { .. } | TestFunctional::Step { .. } => {
                Some(1.0)
            }
            TestFunctional::Coordinate { .. } | TestFunctional::SquaredNorm => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_differences() {
        let x = [0.3, -0.8, 1.1];
        let fs = [
            TestFunctional::Coordinate { index: 1 },
            TestFunctional::SquaredNorm,
            TestFunctional::Sine { index: 2 },
            TestFunctional::Sigmoid { index: 0, scale: 3.0 },
        ];
        for f in &fs {
            let mut g = [0.0; 3];
            let mut h = [0.0; 3];
            f.gradient(&x, &mut g).unwrap();
            f.hessian_diag(&x, &mut h).unwrap();
            for k in 0..3 {
                let e = 1e-5;
                let mut xp = x;
                let mut xm = x;
                xp[k] += e;
                xm[k] -= e;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * e);
                assert!((fd - g[k]).abs() < 1e-8, "{f:?}");
                let fd2 = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (e * e);
                assert!((fd2 - h[k]).abs() < 1e-4, "{f:?}");
            }
        }
    }

    #[test]
    fn step_is_bounded_not_differentiable() {
        let f = TestFunctional::Step { index: 0, threshold: 0.0 };
        assert_eq!(f.value(&[0.1]), 1.0);
        assert_eq!(f.value(&[0.0]), 0.0);
        assert_eq!(f.sup_norm(), Some(1.0));
        assert!(f.gradient(&[0.0], &mut [0.0]).is_err());
        assert!(f.validate(1).is_ok());
        assert!(TestFunctional::Sine { index: 3 }.validate(2).is_err());
    }
}
