//! Monte Carlo laboratory for semilinear stochastic evolution equations
//!
//! ```text
//! du = (A u + f(u)) dt + B(u) dW + ∫_Z G(u(t-), z) μ̄(dt, dz),   u(0) = x
//! ```
//!
//! on a spectral Galerkin truncation, with Q-Wiener noise `W` and a
//! compensated Poisson random measure `μ̄`. Paths, first and second variation
//! processes and Monte Carlo certificates of maximal inequalities, Lipschitz
//! and gradient bounds are all computed on frozen, reproducible noise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod error;
pub mod estimators;
pub mod functional;
pub mod marks;
pub mod mc;
pub mod noise;
pub mod rng;
pub mod scenario;
pub mod sensitivity;
pub mod solver;
pub mod spectral;

pub use coefficients::{builtin_coefficients, omega1, CoefficientSet, CoefficientSpec};
pub use error::{LabError, Result};
pub use estimators::{McConfig, Report};
pub use functional::TestFunctional;
pub use marks::MarkLaw;
pub use mc::McEstimate;
pub use noise::{sample_noise, JumpEvent, NoiseRealization};
pub use sensitivity::{finite_difference_variation, first_variation, second_variation, VariationRecord};
pub use solver::{coupled_paths, picard_iterate, simulate_path, sup_norm_p, PathRecord};
pub use scenario::{CheckName, LoadedScenario, Scenario};
pub use spectral::DiagonalModel;
