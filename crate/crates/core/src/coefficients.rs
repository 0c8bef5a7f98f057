//! Built-in nonlinearities `f`, `B`, `G` with exact first and second
//! derivatives, mark integrals and declared Lipschitz constants.
//!
//! Diffusions are diagonal: `(B(x) n)_k = σ_k(x) n_k`. Jump amplitudes take a
//! scalar mark `z`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::DiagonalModel;

/// A scalar broadcast to every mode, or one value per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerMode {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Default for PerMode {
    fn default() -> Self {
        PerMode::Scalar(0.0)
    }
}

impl PerMode {
    pub fn resolve(&self, dim: usize, field: &str) -> Result<Vec<f64>> {
        let v = match self {
            PerMode::Scalar(s) => vec![*s; dim],
            PerMode::Vector(v) if v.len() == dim => v.clone(),
            PerMode::Vector(v) => {
                return Err(LabError::config(
                    field,
                    format!("expected {dim} entries, got {}", v.len()),
                ))
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LabError::config(field, "entries must be finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DriftSpec {
    #[default]
    Zero,
    /// `f(x) = F x` with `F = diag(diag)`.
    Linear { diag: PerMode },
    /// `f(x)_k = c sin(x_k)`
    NemytskiiSin { c: f64 },
    /// `f(x)_k = c x_k²`; smooth but not globally Lipschitz.
    Quadratic { c: f64 },
}

fn default_one() -> PerMode {
    PerMode::Scalar(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DiffusionSpec {
    /// `σ_k(x) = b_k`
    Additive {
        #[serde(default = "default_one")]
        b: PerMode,
    },
    /// `σ_k(x) = b_k + β_k tanh(x_k)`
    MultiplicativeDiagonal { b: PerMode, beta: PerMode },
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        DiffusionSpec::Additive { b: PerMode::Scalar(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum JumpSpec {
    #[default]
    Zero,
    /// `G(x, z) = g + z h`
    Additive {
        #[serde(default)]
        g: PerMode,
        #[serde(default)]
        h: PerMode,
    },
    /// `G(x, z) = (γ₀ + γ₁ z) x + g + z h`
    JumpLinear {
        #[serde(default)]
        gamma0: f64,
        #[serde(default)]
        gamma1: f64,
        #[serde(default)]
        g: PerMode,
        #[serde(default)]
        h: PerMode,
    },
    /// `G(x, z)_k = (c₀ + c₁ z) sin(x_k)`
    JumpSine {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        c1: f64,
    },
}

/// How `∫_Z … m(dz)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MarkIntegration {
    /// Closed-form compensator; other mark integrals use quadrature.
    #[default]
    ClosedForm,
    Quadrature,
    None,
}

fn default_nodes() -> usize {
    32
}
fn default_order() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub jump: JumpSpec,
    #[serde(default)]
    pub mark_integration: MarkIntegration,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    /// Reject the set unless `B(x)` is uniformly invertible.
    #[serde(default)]
    pub require_invertible: bool,
    /// Highest derivative order the set advertises (1 or 2).
    #[serde(default = "default_order")]
    pub derivative_order: u8,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::default(),
            jump: JumpSpec::Zero,
            mark_integration: MarkIntegration::ClosedForm,
            quadrature_nodes: default_nodes(),
            require_invertible: false,
            derivative_order: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearStructure {
    pub drift: Vec<f64>,
    pub b: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Drift {
    Zero,
    Linear(Vec<f64>),
    Sin(f64),
    Quadratic(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Diffusion {
    Additive(Vec<f64>),
    Tanh { b: Vec<f64>, beta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum Jump {
    Zero,
    Affine {
        gamma0: f64,
        gamma1: f64,
        g: Vec<f64>,
        h: Vec<f64>,
    },
    Sine {
        c0: f64,
        c1: f64,
    },
}

/// `sup |tanh''| = 4 / (3√3)`
const TANH_SECOND_SUP: f64 = 0.769_800_358_919_501;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    dim: usize,
    drift: Drift,
    diffusion: Diffusion,
    jump: Jump,
    integration: MarkIntegration,
    jump_rate: f64,
    mark_mean: f64,
    mark_second: f64,
    /// `(z, λ_m w)`: nodes with weights already scaled by the intensity.
    mark_nodes: Vec<(f64, f64)>,
    derivative_order: u8,
    lip_f: f64,
    lip_b: f64,
    lip_g: f64,
    bound_b_inverse: Option<f64>,
    spec: CoefficientSpec,
}

impl CoefficientSet {
    pub fn new(spec: &CoefficientSpec, model: &DiagonalModel) -> Result<Self> {
        let d = model.dim();
        let drift = match &spec.drift {
            DriftSpec::Zero => Drift::Zero,
            DriftSpec::Linear { diag } => Drift::Linear(diag.resolve(d, "coefficients.drift.diag")?),
            DriftSpec::NemytskiiSin { c } => Drift::Sin(finite(*c, "coefficients.drift.c")?),
            DriftSpec::Quadratic { c } => Drift::Quadratic(finite(*c, "coefficients.drift.c")?),
        };
        let diffusion = match &spec.diffusion {
            DiffusionSpec::Additive { b } => {
                Diffusion::Additive(b.resolve(d, "coefficients.diffusion.b")?)
            }
            DiffusionSpec::MultiplicativeDiagonal { b, beta } => Diffusion::Tanh {
                b: b.resolve(d, "coefficients.diffusion.b")?,
                beta: beta.resolve(d, "coefficients.diffusion.beta")?,
            },
        };
        let jump = match &spec.jump {
            JumpSpec::Zero => Jump::Zero,
            JumpSpec::Additive { g, h } => Jump::Affine {
                gamma0: 0.0,
                gamma1: 0.0,
                g: g.resolve(d, "coefficients.jump.g")?,
                h: h.resolve(d, "coefficients.jump.h")?,
            },
            JumpSpec::JumpLinear { gamma0, gamma1, g, h } => Jump::Affine {
                gamma0: finite(*gamma0, "coefficients.jump.gamma0")?,
                gamma1: finite(*gamma1, "coefficients.jump.gamma1")?,
                g: g.resolve(d, "coefficients.jump.g")?,
                h: h.resolve(d, "coefficients.jump.h")?,
            },
            JumpSpec::JumpSine { c0, c1 } => Jump::Sine {
                c0: finite(*c0, "coefficients.jump.c0")?,
                c1: finite(*c1, "coefficients.jump.c1")?,
            },
        };
        if !(1..=2).contains(&spec.derivative_order) {
            return Err(LabError::config(
                "coefficients.derivative_order",
                "must be 1 or 2",
            ));
        }
        if spec.quadrature_nodes == 0 {
            return Err(LabError::config(
                "coefficients.quadrature_nodes",
                "must be positive",
            ));
        }

        let law = model.mark_law();
        let rate = model.jump_rate();
        let (m1, m2) = (law.mean(), law.second_moment());
        let mark_nodes = law
            .quadrature(spec.quadrature_nodes)
            .into_iter()
            .map(|(z, w)| (z, rate * w))
            .collect();

        let lip_f = match &drift {
            Drift::Zero => 0.0,
            Drift::Linear(diag) => diag.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Drift::Sin(c) => c.abs(),
            Drift::Quadratic(c) if *c == 0.0 => 0.0,
            Drift::Quadratic(_) => f64::INFINITY,
        };
        let q = model.wiener_variances();
        let lip_b = match &diffusion {
            Diffusion::Additive(_) => 0.0,
            Diffusion::Tanh { beta, .. } => beta
                .iter()
                .zip(q)
                .fold(0.0f64, |m, (b, qk)| m.max(b.abs() * qk.sqrt())),
        };
        let lip_g = match &jump {
            Jump::Zero => 0.0,
            Jump::Affine { gamma0, gamma1, .. } => {
                let e_gamma2 = gamma0 * gamma0 + 2.0 * gamma0 * gamma1 * m1 + gamma1 * gamma1 * m2;
                (rate * e_gamma2.max(0.0)).sqrt()
            }
            Jump::Sine { c0, c1 } => {
                let e_c2 = c0 * c0 + 2.0 * c0 * c1 * m1 + c1 * c1 * m2;
                (rate * e_c2.max(0.0)).sqrt()
            }
        };
        let bound_b_inverse = match &diffusion {
            Diffusion::Additive(b) if b.iter().all(|v| *v != 0.0) => {
                Some(b.iter().fold(0.0f64, |m, v| m.max(1.0 / v.abs())))
            }
            Diffusion::Tanh { b, beta } if b.iter().zip(beta).all(|(b, be)| b.abs() > be.abs()) => {
                Some(
                    b.iter()
                        .zip(beta)
                        .fold(0.0f64, |m, (b, be)| m.max(1.0 / (b.abs() - be.abs()))),
                )
            }
            _ => None,
        };
        if spec.require_invertible && bound_b_inverse.is_none() {
            return Err(LabError::config(
                "coefficients.diffusion",
                "B(x) is not uniformly invertible (need |b_k| > |beta_k| > = 0 for all k)",
            ));
        }

        Ok(Self {
            dim: d,
            drift,
            diffusion,
            jump,
            integration: spec.mark_integration,
            jump_rate: rate,
            mark_mean: m1,
            mark_second: m2,
            mark_nodes,
            derivative_order: spec.derivative_order,
            lip_f,
            lip_b,
            lip_g,
            bound_b_inverse,
            spec: spec.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }
    /// `[f]₁`; infinite for drifts that are not globally Lipschitz.
    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }
    /// `[B]_{1,Q}` in the Hilbert-Schmidt norm weighted by `Q^{1/2}`.
    pub fn lip_b(&self) -> f64 {
        self.lip_b
    }
    /// `[G]_{1,m}` in `L₂(Z, m)`.
    pub fn lip_g(&self) -> f64 {
        self.lip_g
    }
    pub fn bound_b_inverse(&self) -> Option<f64> {
        self.bound_b_inverse
    }
    pub fn derivative_order(&self) -> u8 {
        self.derivative_order
    }
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    /// `B` and `G` do not depend on the state.
    pub fn is_additive(&self) -> bool {
        let b_const = matches!(self.diffusion, Diffusion::Additive(_));
        let g_const = match &self.jump {
            Jump::Zero => true,
            Jump::Affine { gamma0, gamma1, .. } => *gamma0 == 0.0 && *gamma1 == 0.0,
            Jump::Sine { c0, c1 } => *c0 == 0.0 && *c1 == 0.0,
        };
        b_const && g_const
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_rate > 0.0 && self.jump != Jump::Zero
    }

    /// `C₁ ≥ |D²f(x)| + |D²B(x)|` uniformly in `x`.
    pub fn second_order_bound(&self) -> f64 {
        let f2 = match &self.drift {
            Drift::Zero | Drift::Linear(_) => 0.0,
            Drift::Sin(c) => c.abs(),
            Drift::Quadratic(c) => 2.0 * c.abs(),
        };
        let b2 = match &self.diffusion {
            Diffusion::Additive(_) => 0.0,
            Diffusion::Tanh { beta, .. } => {
                TANH_SECOND_SUP * beta.iter().fold(0.0f64, |m, b| m.max(b.abs()))
            }
        };
        f2 + b2
    }

    /// `h₁(z) ≥ |D₁²G(x, z)|` uniformly in `x`.
    pub fn jump_second_order_bound(&self, z: f64) -> f64 {
        match &self.jump {
            Jump::Zero | Jump::Affine { .. } => 0.0,
            Jump::Sine { c0, c1 } => (c0 + c1 * z).abs(),
        }
    }

    pub(crate) fn require_order(&self, order: u8, what: &str) -> Result<()> {
        if self.derivative_order < order {
            return Err(LabError::Capability(format!(
                "{what} needs derivatives of order {order}, coefficient set declares {}",
                self.derivative_order
            )));
        }
        Ok(())
    }

    // --- drift -------------------------------------------------------------

    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Linear(diag) => {
                for k in 0..x.len() {
                    out[k] = diag[k] * x[k];
                }
            }
            Drift::Sin(c) => {
                for k in 0..x.len() {
                    out[k] = c * x[k].sin();
                }
            }
            Drift::Quadratic(c) => {
                for k in 0..x.len() {
                    out[k] = c * x[k] * x[k];
                }
            }
        }
    }

    /// `Df(x) v`
    #[inline]
    pub fn drift_jvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Linear(diag) => {
                for k in 0..x.len() {
                    out[k] = diag[k] * v[k];
                }
            }
            Drift::Sin(c) => {
                for k in 0..x.len() {
                    out[k] = c * x[k].cos() * v[k];
                }
            }
            Drift::Quadratic(c) => {
                for k in 0..x.len() {
                    out[k] = 2.0 * c * x[k] * v[k];
                }
            }
        }
    }

    /// `D²f(x)(v, w)`
    #[inline]
    pub fn drift_hvp(&self, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero | Drift::Linear(_) => out.fill(0.0),
            Drift::Sin(c) => {
                for k in 0..x.len() {
                    out[k] = -c * x[k].sin() * (v[k] * w[k]);
                }
            }
            Drift::Quadratic(c) => {
                for k in 0..x.len() {
                    out[k] = 2.0 * c * (v[k] * w[k]);
                }
            }
        }
    }

    // --- diffusion ---------------------------------------------------------

    /// Diagonal entries `σ_k(x)` of `B(x)`.
    #[inline]
    pub fn diffusion_diag(&self, x: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Additive(b) => out.copy_from_slice(b),
            Diffusion::Tanh { b, beta } => {
                for k in 0..x.len() {
                    out[k] = b[k] + beta[k] * x[k].tanh();
                }
            }
        }
    }

    /// `B(x) n`
    #[inline]
    pub fn diffusion(&self, x: &[f64], n: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Additive(b) => {
                for k in 0..x.len() {
                    out[k] = b[k] * n[k];
                }
            }
            Diffusion::Tanh { b, beta } => {
                for k in 0..x.len() {
                    out[k] = (b[k] + beta[k] * x[k].tanh()) * n[k];
                }
            }
        }
    }

    /// `(DB(x) v) n`
    #[inline]
    pub fn diffusion_jvp(&self, x: &[f64], v: &[f64], n: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Additive(_) => out.fill(0.0),
            Diffusion::Tanh { beta, .. } => {
                for k in 0..x.len() {
                    let th = x[k].tanh();
                    out[k] = beta[k] * (1.0 - th * th) * v[k] * n[k];
                }
            }
        }
    }

    /// `(D²B(x)(v, w)) n`
    #[inline]
    pub fn diffusion_hvp(&self, x: &[f64], v: &[f64], w: &[f64], n: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Additive(_) => out.fill(0.0),
            Diffusion::Tanh { beta, .. } => {
                for k in 0..x.len() {
                    let th = x[k].tanh();
                    out[k] = -2.0 * beta[k] * th * (1.0 - th * th) * (v[k] * w[k]) * n[k];
                }
            }
        }
    }

    /// `B(x)⁻¹ w`
    pub fn diffusion_inverse(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        if self.bound_b_inverse.is_none() {
            return Err(LabError::Capability(
                "diffusion is not uniformly invertible".into(),
            ));
        }
        match &self.diffusion {
            Diffusion::Additive(b) => {
                for k in 0..x.len() {
                    out[k] = w[k] / b[k];
                }
            }
            Diffusion::Tanh { b, beta } => {
                for k in 0..x.len() {
                    out[k] = w[k] / (b[k] + beta[k] * x[k].tanh());
                }
            }
        }
        Ok(())
    }

    // --- jumps -------------------------------------------------------------

    /// `G(x, z)`
    #[inline]
    pub fn jump(&self, x: &[f64], z: f64, out: &mut [f64]) {
        match &self.jump {
            Jump::Zero => out.fill(0.0),
            Jump::Affine { gamma0, gamma1, g, h } => {
                let gam = gamma0 + gamma1 * z;
                for k in 0..x.len() {
                    out[k] = gam * x[k] + g[k] + z * h[k];
                }
            }
            Jump::Sine { c0, c1 } => {
                let c = c0 + c1 * z;
                for k in 0..x.len() {
                    out[k] = c * x[k].sin();
                }
            }
        }
    }

    /// `D₁G(x, z) v`
    #[inline]
    pub fn jump_jvp(&self, x: &[f64], z: f64, v: &[f64], out: &mut [f64]) {
        match &self.jump {
            Jump::Zero => out.fill(0.0),
            Jump::Affine { gamma0, gamma1, .. } => {
                let gam = gamma0 + gamma1 * z;
                for k in 0..x.len() {
                    out[k] = gam * v[k];
                }
            }
            Jump::Sine { c0, c1 } => {
                let c = c0 + c1 * z;
                for k in 0..x.len() {
                    out[k] = c * x[k].cos() * v[k];
                }
            }
        }
    }

    /// `D₁²G(x, z)(v, w)`
    #[inline]
    pub fn jump_hvp(&self, x: &[f64], z: f64, v: &[f64], w: &[f64], out: &mut [f64]) {
        match &self.jump {
            Jump::Zero | Jump::Affine { .. } => out.fill(0.0),
            Jump::Sine { c0, c1 } => {
                let c = c0 + c1 * z;
                for k in 0..x.len() {
                    out[k] = -c * x[k].sin() * (v[k] * w[k]);
                }
            }
        }
    }

    fn mark_integration_available(&self) -> Result<()> {
        if self.integration == MarkIntegration::None {
            return Err(LabError::QuadratureNotConfigured(format!("{:?}", self.spec.jump)));
        }
        Ok(())
    }

    /// Mark integral `∫ F(z) m(dz)` of a vector-valued integrand by quadrature.
    fn quadrature_vec(&self, out: &mut [f64], mut integrand: impl FnMut(f64, &mut [f64])) {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        for &(z, w) in &self.mark_nodes {
            integrand(z, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        }
    }

    fn no_jump_integral(&self) -> bool {
        self.jump_rate == 0.0 || self.jump == Jump::Zero
    }

    /// `Ḡ(x) = ∫ G(x, z) m(dz)`
    pub fn compensator(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.no_jump_integral() {
            out.fill(0.0);
            return Ok(());
        }
        self.mark_integration_available()?;
        if self.integration == MarkIntegration::Quadrature {
            self.quadrature_vec(out, |z, buf| self.jump(x, z, buf));
            return Ok(());
        }
        let (lam, m1) = (self.jump_rate, self.mark_mean);
        match &self.jump {
            Jump::Zero => out.fill(0.0),
            Jump::Affine { gamma0, gamma1, g, h } => {
                let gam = gamma0 + gamma1 * m1;
                for k in 0..x.len() {
                    out[k] = lam * (gam * x[k] + g[k] + m1 * h[k]);
                }
            }
            Jump::Sine { c0, c1 } => {
                let c = lam * (c0 + c1 * m1);
                for k in 0..x.len() {
                    out[k] = c * x[k].sin();
                }
            }
        }
        Ok(())
    }

    /// `DḠ(x) v = ∫ D₁G(x, z) v m(dz)`
    pub fn compensator_jvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        if self.no_jump_integral() {
            out.fill(0.0);
            return Ok(());
        }
        self.mark_integration_available()?;
        if self.integration == MarkIntegration::Quadrature {
            self.quadrature_vec(out, |z, buf| self.jump_jvp(x, z, v, buf));
            return Ok(());
        }
        let (lam, m1) = (self.jump_rate, self.mark_mean);
        match &self.jump {
            Jump::Zero => out.fill(0.0),
            Jump::Affine { gamma0, gamma1, .. } => {
                let gam = lam * (gamma0 + gamma1 * m1);
                for k in 0..x.len() {
                    out[k] = gam * v[k];
                }
            }
            Jump::Sine { c0, c1 } => {
                let c = lam * (c0 + c1 * m1);
                for k in 0..x.len() {
                    out[k] = c * x[k].cos() * v[k];
                }
            }
        }
        Ok(())
    }

    /// `D²Ḡ(x)(v, w)`
    pub fn compensator_hvp(&self, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        if self.no_jump_integral() {
            out.fill(0.0);
            return Ok(());
        }
        self.mark_integration_available()?;
        if self.integration == MarkIntegration::Quadrature {
            self.quadrature_vec(out, |z, buf| self.jump_hvp(x, z, v, w, buf));
            return Ok(());
        }
        let (lam, m1) = (self.jump_rate, self.mark_mean);
        match &self.jump {
            Jump::Zero | Jump::Affine { .. } => out.fill(0.0),
            Jump::Sine { c0, c1 } => {
                let c = lam * (c0 + c1 * m1);
                for k in 0..x.len() {
                    out[k] = -c * x[k].sin() * (v[k] * w[k]);
                }
            }
        }
        Ok(())
    }

    /// Scalar mark integral `∫ F(z) m(dz)` via the configured quadrature.
    pub fn mark_integral(&self, mut integrand: impl FnMut(f64) -> f64) -> Result<f64> {
        if self.jump_rate == 0.0 {
            return Ok(0.0);
        }
        self.mark_integration_available()?;
        Ok(self.mark_nodes.iter().map(|&(z, w)| w * integrand(z)).sum())
    }

    /// `(∫|G(x,z)|^p m(dz), ∫|G(x,z)|² m(dz))`
    pub fn jump_norms(&self, x: &[f64], p: f64) -> Result<(f64, f64)> {
        if self.no_jump_integral() {
            return Ok((0.0, 0.0));
        }
        self.mark_integration_available()?;
        let mut buf = vec![0.0; x.len()];
        let (mut lp, mut l2) = (0.0, 0.0);
        for &(z, w) in &self.mark_nodes {
            self.jump(x, z, &mut buf);
            let n2: f64 = buf.iter().map(|v| v * v).sum();
            l2 += w * n2;
            lp += w * n2.powf(0.5 * p);
        }
        Ok((lp, l2))
    }

    /// `E_ν[z]`, `E_ν[z²]` of the model's mark law.
    pub fn mark_moments(&self) -> (f64, f64) {
        (self.mark_mean, self.mark_second)
    }

    /// Per-mode `(F, b, g, h)` when `f(x) = Fx`, `B = diag(b)` and
    /// `G(x, z) = g + z h`; `None` for any state-dependent noise.
    pub fn linear_structure(&self) -> Option<LinearStructure> {
        let d = self.dim;
        let drift = match &self.drift {
            Drift::Zero => vec![0.0; d],
            Drift::Linear(f) => f.clone(),
            Drift::Quadratic(c) if *c == 0.0 => vec![0.0; d],
            _ => return None,
        };
        let b = match &self.diffusion {
            Diffusion::Additive(b) => b.clone(),
            Diffusion::Tanh { b, beta } if beta.iter().all(|v| *v == 0.0) => b.clone(),
            _ => return None,
        };
        let (g, h) = match &self.jump {
            Jump::Zero => (vec![0.0; d], vec![0.0; d]),
            Jump::Affine { gamma0, gamma1, g, h } if *gamma0 == 0.0 && *gamma1 == 0.0 => {
                (g.clone(), h.clone())
            }
            _ => return None,
        };
        Some(LinearStructure { drift, b, g, h })
    }
}

fn finite(v: f64, field: &str) -> Result<f64> {
    if !v.is_finite() {
        return Err(LabError::config(field, "must be finite"));
    }
    Ok(v)
}

/// Catalogue constructor: one family with the remaining parts zero.
///
/// Names: `zero`, `linear`, `nemytskii-sin`, `quadratic` (drift);
/// `additive` (constant `B` and `G`: params `b`, `g`, `h`);
/// `multiplicative-diagonal` (`b`, `beta`); `jump-linear`, `jump-sine`.
pub fn builtin_coefficients(
    name: &str,
    params: &serde_json::Value,
    model: &DiagonalModel,
) -> Result<CoefficientSet> {
    let field = |e: serde_json::Error| LabError::config(format!("coefficients.{name}"), e.to_string());
    let mut tagged = params.clone();
    let obj = tagged
        .as_object_mut()
        .ok_or_else(|| LabError::config(format!("coefficients.{name}"), "params must be a table"))?;
    let require_invertible = obj
        .remove("require_invertible")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    obj.insert("family".into(), serde_json::Value::String(name.into()));

    let mut spec = CoefficientSpec {
        require_invertible,
        ..CoefficientSpec::default()
    };
    match name {
        "zero" => {}
        "linear" | "nemytskii-sin" | "quadratic" => {
            spec.drift = serde_json::from_value(tagged).map_err(field)?;
        }
        "multiplicative-diagonal" => {
            spec.diffusion = serde_json::from_value(tagged).map_err(field)?;
        }
        "jump-linear" | "jump-sine" => {
            spec.jump = serde_json::from_value(tagged).map_err(field)?;
        }
        "additive" => {
            let b: PerMode = obj_get(params, "b").map_err(field)?.unwrap_or_default();
            let g: PerMode = obj_get(params, "g").map_err(field)?.unwrap_or_default();
            let h: PerMode = obj_get(params, "h").map_err(field)?.unwrap_or_default();
            spec.diffusion = DiffusionSpec::Additive { b };
            spec.jump = JumpSpec::Additive { g, h };
        }
        other => {
            return Err(LabError::config(
                "coefficients",
                format!("unknown built-in family `{other}`"),
            ))
        }
    }
    CoefficientSet::new(&spec, model)
}

fn obj_get<T: serde::de::DeserializeOwned>(
    v: &serde_json::Value,
    key: &str,
) -> std::result::Result<Option<T>, serde_json::Error> {
    v.get(key).map(|x| serde_json::from_value(x.clone())).transpose()
}

/// `ω₁ = η + [f]₁ + ½[B]²_{1,Q} + ½[G]²_{1,m}`
pub fn omega1(model: &DiagonalModel, coeffs: &CoefficientSet) -> f64 {
    model.eta() + coeffs.lip_f() + 0.5 * coeffs.lip_b().powi(2) + 0.5 * coeffs.lip_g().powi(2)
}

/// Additive-noise rate `η + [f]₁`.
pub fn omega1_additive(model: &DiagonalModel, coeffs: &CoefficientSet) -> f64 {
    model.eta() + coeffs.lip_f()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::MarkLaw;
    use crate::spectral::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn heat(d: usize, rate: f64, law: MarkLaw) -> DiagonalModel {
        DiagonalModel::heat(d, 0.7, rate, law, 1.0).unwrap()
    }

    fn rich_sets() -> Vec<(DiagonalModel, CoefficientSet)> {
        let m = heat(3, 2.5, MarkLaw::Uniform { lo: -1.0, hi: 2.0 });
        let specs = [
            CoefficientSpec {
                drift: DriftSpec::NemytskiiSin { c: -1.3 },
                diffusion: DiffusionSpec::MultiplicativeDiagonal {
                    b: PerMode::Scalar(1.0),
                    beta: PerMode::Vector(vec![0.5, -0.3, 0.2]),
                },
                jump: JumpSpec::JumpLinear {
                    gamma0: -0.2,
                    gamma1: 0.3,
                    g: PerMode::Scalar(0.1),
                    h: PerMode::Scalar(0.4),
                },
                ..Default::default()
            },
            CoefficientSpec {
                drift: DriftSpec::Linear { diag: PerMode::Vector(vec![-1.0, 0.5, 2.0]) },
                diffusion: DiffusionSpec::Additive { b: PerMode::Scalar(0.3) },
                jump: JumpSpec::JumpSine { c0: 0.4, c1: -0.25 },
                ..Default::default()
            },
        ];
        specs
            .iter()
            .map(|s| (m.clone(), CoefficientSet::new(s, &m).unwrap()))
            .collect()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
        (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
    }

    #[test]
    fn additive_zero_example() {
        let m = heat(2, 1.0, MarkLaw::default());
        let c = builtin_coefficients("additive", &json!({"b": 0.0, "g": 0.0}), &m).unwrap();
        assert_eq!(c.lip_b(), 0.0);
        assert_eq!(c.lip_g(), 0.0);
        let mut out = vec![1.0; 2];
        c.diffusion(&[0.3, 0.1], &[1.0, 1.0], &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
        c.jump(&[0.3, 0.1], 1.0, &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn nemytskii_lipschitz_is_c() {
        let m = heat(4, 0.0, MarkLaw::default());
        let c = builtin_coefficients("nemytskii-sin", &json!({"c": 2.0}), &m).unwrap();
        assert_eq!(c.lip_f(), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut fx, mut fy) = (vec![0.0; 4], vec![0.0; 4]);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = rand_vec(&mut rng, 4, 3.0);
            let y: Vec<f64> = x.iter().map(|v| v + 1e-3 * (rng.random::<f64>() - 0.5)).collect();
            c.drift(&x, &mut fx);
            c.drift(&y, &mut fy);
            let r = norm(&fx.iter().zip(&fy).map(|(a, b)| a - b).collect::<Vec<_>>())
                / norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            worst = worst.max(r);
        }
        assert!(worst <= 2.0);
        assert!(worst > 1.9, "pair test should approach the declared constant: {worst}");
    }

    #[test]
    fn linear_derivative_is_f() {
        let m = heat(1, 0.0, MarkLaw::default());
        let c = builtin_coefficients("linear", &json!({"diag": [-1.0]}), &m).unwrap();
        let mut out = vec![0.0];
        for x in [-3.0, 0.0, 2.5] {
            c.drift_jvp(&[x], &[0.7], &mut out);
            assert_eq!(out[0], -0.7);
        }
    }

    #[test]
    fn unknown_family_rejected() {
        let m = heat(1, 0.0, MarkLaw::default());
        assert!(builtin_coefficients("cubic", &json!({}), &m).is_err());
    }

    #[test]
    fn invertibility_requested_but_violated() {
        let m = heat(2, 0.0, MarkLaw::default());
        let err = builtin_coefficients(
            "multiplicative-diagonal",
            &json!({"b": 0.5, "beta": 0.5, "require_invertible": true}),
            &m,
        );
        assert!(matches!(err, Err(LabError::Config { .. })));
        let ok = builtin_coefficients(
            "multiplicative-diagonal",
            &json!({"b": 1.0, "beta": 0.5, "require_invertible": true}),
            &m,
        )
        .unwrap();
        assert_eq!(ok.bound_b_inverse(), Some(2.0));
    }

    #[test]
    fn omega1_examples() {
        let m0 = heat(1, 0.0, MarkLaw::default());
        let zero = builtin_coefficients("zero", &json!({}), &m0).unwrap();
        assert_eq!(omega1(&m0, &zero), 0.0);

        let m1 = DiagonalModel::new(vec![0.0], 1.0, vec![0.0], 0.0, MarkLaw::default(), 1.0).unwrap();
        let sin2 = builtin_coefficients("nemytskii-sin", &json!({"c": 2.0}), &m1).unwrap();
        assert_eq!(omega1(&m1, &sin2), 3.0);

        // [B]_{1,Q} = |β| √q = 2, [G]_{1,m} = √(λ γ²) = 2
        let m2 = DiagonalModel::new(vec![-1.0], 0.0, vec![1.0], 4.0, MarkLaw::default(), 1.0).unwrap();
        let spec = CoefficientSpec {
            diffusion: DiffusionSpec::MultiplicativeDiagonal {
                b: PerMode::Scalar(3.0),
                beta: PerMode::Scalar(2.0),
            },
            jump: JumpSpec::JumpLinear { gamma0: 1.0, gamma1: 0.0, g: PerMode::Scalar(0.0), h: PerMode::Scalar(0.0) },
            ..Default::default()
        };
        let c = CoefficientSet::new(&spec, &m2).unwrap();
        assert!((c.lip_b() - 2.0).abs() < 1e-15);
        assert!((c.lip_g() - 2.0).abs() < 1e-15);
        assert!((omega1(&m2, &c) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn declared_lipschitz_constants_are_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (m, c) in rich_sets() {
            let d = m.dim();
            let q = m.wiener_variances();
            let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
            for _ in 0..1000 {
                let x = rand_vec(&mut rng, d, 2.0);
                let y = rand_vec(&mut rng, d, 2.0);
                let dxy = norm(&x.iter().zip(&y).map(|(p, q)| p - q).collect::<Vec<_>>());
                c.drift(&x, &mut a);
                c.drift(&y, &mut b);
                let df = norm(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
                assert!(df <= c.lip_f() * dxy * (1.0 + 1e-12));

                c.diffusion_diag(&x, &mut a);
                c.diffusion_diag(&y, &mut b);
                let db: f64 = (0..d).map(|k| q[k] * (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
                assert!(db <= c.lip_b() * dxy * (1.0 + 1e-12));

                let dg2 = c
                    .mark_integral(|z| {
                        let mut ga = vec![0.0; d];
                        let mut gb = vec![0.0; d];
                        c.jump(&x, z, &mut ga);
                        c.jump(&y, z, &mut gb);
                        ga.iter().zip(&gb).map(|(p, q)| (p - q).powi(2)).sum()
                    })
                    .unwrap();
                assert!(dg2.sqrt() <= c.lip_g() * dxy * (1.0 + 1e-12));
            }
        }
    }

    /// Forward differences against the analytic derivative stack.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (m, c) in rich_sets() {
            let d = m.dim();
            let x = rand_vec(&mut rng, d, 1.5);
            let v = rand_vec(&mut rng, d, 1.0);
            let w = rand_vec(&mut rng, d, 1.0);
            let n = rand_vec(&mut rng, d, 1.0);
            let z = 0.6;
            type Eval<'a> = Box<dyn Fn(&[f64], &mut [f64]) + 'a>;
            let maps: Vec<(Eval, Eval, Eval)> = vec![
                (
                    Box::new(|x, o| c.drift(x, o)),
                    Box::new(|x, o| c.drift_jvp(x, &v, o)),
                    Box::new(|x, o| c.drift_hvp(x, &v, &w, o)),
                ),
                (
                    Box::new(|x, o| c.diffusion(x, &n, o)),
                    Box::new(|x, o| c.diffusion_jvp(x, &v, &n, o)),
                    Box::new(|x, o| c.diffusion_hvp(x, &v, &w, &n, o)),
                ),
                (
                    Box::new(|x, o| c.jump(x, z, o)),
                    Box::new(|x, o| c.jump_jvp(x, z, &v, o)),
                    Box::new(|x, o| c.jump_hvp(x, z, &v, &w, o)),
                ),
                (
                    Box::new(|x, o| c.compensator(x, o).unwrap()),
                    Box::new(|x, o| c.compensator_jvp(x, &v, o).unwrap()),
                    Box::new(|x, o| c.compensator_hvp(x, &v, &w, o).unwrap()),
                ),
            ];
            for (val, jvp, hvp) in &maps {
                let mut exact = vec![0.0; d];
                jvp(&x, &mut exact);
                let mut exact2 = vec![0.0; d];
                hvp(&x, &mut exact2);
                let mut errs = Vec::new();
                let mut errs2 = Vec::new();
                for h in [1e-2, 1e-3, 1e-4, 1e-5] {
                    let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
                    let (mut f0, mut f1) = (vec![0.0; d], vec![0.0; d]);
                    val(&x, &mut f0);
                    val(&xp, &mut f1);
                    let fd: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| (a - b) / h).collect();
                    errs.push(norm(&fd.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>()));
                    // second derivative: difference of first derivatives along w
                    let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + h * b).collect();
                    let (mut j0, mut j1) = (vec![0.0; d], vec![0.0; d]);
                    jvp(&x, &mut j0);
                    jvp(&xw, &mut j1);
                    let fd2: Vec<f64> = j1.iter().zip(&j0).map(|(a, b)| (a - b) / h).collect();
                    errs2.push(norm(&fd2.iter().zip(&exact2).map(|(a, b)| a - b).collect::<Vec<_>>()));
                }
                for e in [&errs, &errs2] {
                    // O(h): each decade shrinks the error ~10x until roundoff
                    assert!(e[0] < 1e-1, "{e:?}");
                    assert!(e[2] <= e[0] * 0.02 + 1e-9, "{e:?}");
                }
            }
        }
    }

    #[test]
    fn second_derivative_symmetry_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, c) in rich_sets() {
            let d = m.dim();
            for _ in 0..200 {
                let x = rand_vec(&mut rng, d, 3.0);
                let v = rand_vec(&mut rng, d, 1.0);
                let w = rand_vec(&mut rng, d, 1.0);
                let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
                c.drift_hvp(&x, &v, &w, &mut a);
                c.drift_hvp(&x, &w, &v, &mut b);
                assert_eq!(a, b);
                let f2 = norm(&a);
                let ones = vec![1.0; d];
                c.diffusion_hvp(&x, &v, &w, &ones, &mut a);
                let b2 = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(f2 + b2 <= c.second_order_bound() * norm(&v) * norm(&w) + 1e-12);
                let z = 2.0 * rng.random::<f64>() - 1.0;
                c.jump_hvp(&x, z, &v, &w, &mut a);
                assert!(norm(&a) <= c.jump_second_order_bound(z) * norm(&v) * norm(&w) + 1e-12);
            }
        }
    }

    #[test]
    fn inverse_consistency() {
        let m = heat(3, 0.0, MarkLaw::default());
        let c = builtin_coefficients(
            "multiplicative-diagonal",
            &json!({"b": [1.0, -2.0, 0.7], "beta": [0.4, 0.9, -0.2]}),
            &m,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = rand_vec(&mut rng, 3, 4.0);
            let w = rand_vec(&mut rng, 3, 10.0);
            let mut n = vec![0.0; 3];
            c.diffusion_inverse(&x, &w, &mut n).unwrap();
            let mut back = vec![0.0; 3];
            c.diffusion(&x, &n, &mut back);
            for (a, b) in back.iter().zip(&w) {
                assert!((a - b).abs() <= 8.0 * f64::EPSILON * b.abs());
            }
        }
    }

    #[test]
    fn compensator_examples() {
        let m = heat(2, 2.0, MarkLaw::default());
        let c = builtin_coefficients("zero", &json!({}), &m).unwrap();
        let mut out = vec![1.0; 2];
        c.compensator(&[1.0, 2.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);

        let c = builtin_coefficients("additive", &json!({"g": [0.5, -1.5]}), &m).unwrap();
        c.compensator(&[1.0, 2.0], &mut out).unwrap();
        assert_eq!(out, vec![1.0, -3.0]);
    }

    #[test]
    fn quadrature_and_closed_form_compensators_agree() {
        let m = heat(3, 1.7, MarkLaw::Uniform { lo: -0.5, hi: 1.5 });
        for jump in [
            JumpSpec::JumpLinear { gamma0: 0.3, gamma1: -0.4, g: PerMode::Scalar(0.2), h: PerMode::Scalar(1.0) },
            JumpSpec::JumpSine { c0: 0.1, c1: 0.8 },
        ] {
            let closed = CoefficientSet::new(&CoefficientSpec { jump: jump.clone(), ..Default::default() }, &m).unwrap();
            let quad = CoefficientSet::new(
                &CoefficientSpec { jump, mark_integration: MarkIntegration::Quadrature, ..Default::default() },
                &m,
            )
            .unwrap();
            let x = [0.3, -1.2, 2.0];
            let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
            closed.compensator(&x, &mut a).unwrap();
            quad.compensator(&x, &mut b).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn missing_integration_is_reported() {
        let m = heat(1, 1.0, MarkLaw::Gaussian);
        let spec = CoefficientSpec {
            jump: JumpSpec::JumpSine { c0: 1.0, c1: 0.0 },
            mark_integration: MarkIntegration::None,
            ..Default::default()
        };
        let c = CoefficientSet::new(&spec, &m).unwrap();
        let mut out = vec![0.0];
        assert!(matches!(
            c.compensator(&[0.2], &mut out),
            Err(LabError::QuadratureNotConfigured(_))
        ));
    }
}
