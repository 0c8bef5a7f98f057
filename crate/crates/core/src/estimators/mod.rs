//! Monte Carlo certificates: each estimator returns an immutable report whose
//! pass flag is a pure function of the numbers stored in it.

mod bj;
mod generator;
mod gradient;
mod lipschitz;
mod moments;
mod variation;
mod yosida;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientSet;
use crate::error::{LabError, Result};
use crate::mc::McEstimate;
use crate::spectral::DiagonalModel;

pub use bj::{bj_inequality_report, BjIntegrand};
pub use generator::{generator_apply, generator_consistency_report};
pub use gradient::{
    bismut_elworthy_gradient, bismut_elworthy_report, central_difference_gradient,
    resolvent_gradient_report, strong_feller_report, StrongFellerOptions,
};
pub use lipschitz::{additive_moment_report, lipschitz_report};
pub use moments::{ou_moment_reports, ou_moments, weak_error_report, weak_error_study};
pub use variation::second_variation_report;
pub use yosida::yosida_convergence_report;

/// Monte Carlo budget shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: u64,
    /// Uniform steps over the horizon (the grid is refined at jump times).
    pub n_steps: usize,
    pub seed: u64,
    /// Pass margin in standard errors.
    pub margin: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: 10_000, n_steps: 100, seed: 0, margin: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub estimate: McEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

/// `lhs ≤ constant · rhs`, certified with `margin` standard errors plus a
/// deterministic `budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub ratio: f64,
    pub constant: f64,
    pub margin: f64,
    pub budget: f64,
    pub passed: bool,
    pub fingerprint: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
}

impl InequalityReport {
    pub fn evaluate(
        name: &str,
        lhs: McEstimate,
        rhs: McEstimate,
        constant: f64,
        margin: f64,
        budget: f64,
    ) -> Result<Self> {
        let ratio = if rhs.mean > 0.0 {
            lhs.mean / rhs.mean
        } else if lhs.mean == 0.0 {
            0.0
        } else {
            return Err(LabError::Inconsistency(format!(
                "{name}: right-hand side vanishes while left-hand side is {}",
                lhs.mean
            )));
        };
        let mut r = Self {
            name: name.into(),
            lhs,
            rhs,
            ratio,
            constant,
            margin,
            budget,
            passed: false,
            fingerprint: String::new(),
            metadata: BTreeMap::new(),
            series: Vec::new(),
        };
        r.passed = r.check();
        Ok(r)
    }

    /// Recompute the verdict from the stored numbers.
    pub fn check(&self) -> bool {
        let slack = self.margin * self.lhs.stderr.hypot(self.constant * self.rhs.stderr) + self.budget;
        self.lhs.mean <= self.constant * self.rhs.mean + slack
    }

    /// Delta-method standard error of `ratio`, treating both sides as independent.
    pub fn ratio_stderr(&self) -> f64 {
        if self.rhs.mean <= 0.0 {
            return 0.0;
        }
        let r = self.ratio;
        (self.lhs.stderr / self.rhs.mean).hypot(r * self.rhs.stderr / self.rhs.mean)
    }
}

/// `|estimate − reference| ≤ margin · combined stderr + budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub name: String,
    pub estimate: McEstimate,
    pub reference: McEstimate,
    pub margin: f64,
    pub budget: f64,
    pub passed: bool,
    pub fingerprint: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

impl AgreementReport {
    pub fn evaluate(name: &str, estimate: McEstimate, reference: McEstimate, margin: f64, budget: f64) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate,
            reference,
            margin,
            budget,
            passed: false,
            fingerprint: String::new(),
            metadata: BTreeMap::new(),
        };
        r.passed = r.check();
        r
    }

    pub fn check(&self) -> bool {
        let diff = (self.estimate.mean - self.reference.mean).abs();
        diff <= self.margin * self.estimate.stderr.hypot(self.reference.stderr) + self.budget
    }

    pub fn discrepancy(&self) -> f64 {
        (self.estimate.mean - self.reference.mean).abs()
    }
}

/// A ladder of estimates with a log-log slope that must fall in `[lo, hi]`
/// (and, optionally, a monotonicity requirement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub name: String,
    pub points: Vec<SeriesPoint>,
    pub slope: f64,
    pub slope_band: (f64, f64),
    pub passed: bool,
    pub fingerprint: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Report {
    Inequality(InequalityReport),
    Agreement(AgreementReport),
    Series(SeriesReport),
}

impl Report {
    pub fn name(&self) -> &str {
        match self {
            Report::Inequality(r) => &r.name,
            Report::Agreement(r) => &r.name,
            Report::Series(r) => &r.name,
        }
    }

    pub fn passed(&self) -> bool {
        match self {
            Report::Inequality(r) => r.passed,
            Report::Agreement(r) => r.passed,
            Report::Series(r) => r.passed,
        }
    }

    pub fn set_fingerprint(&mut self, fp: &str) {
        let slot = match self {
            Report::Inequality(r) => &mut r.fingerprint,
            Report::Agreement(r) => &mut r.fingerprint,
            Report::Series(r) => &mut r.fingerprint,
        };
        *slot = fp.to_string();
    }

    pub fn metadata(&self) -> &BTreeMap<String, f64> {
        match self {
            Report::Inequality(r) => &r.metadata,
            Report::Agreement(r) => &r.metadata,
            Report::Series(r) => &r.metadata,
        }
    }

    pub const CSV_HEADER: &'static str =
        "name,type,passed,value,value_stderr,reference,reference_stderr,ratio,slope,n_paths,seed,fingerprint";

    /// Flat row for sweep aggregation (columns of [`Report::CSV_HEADER`]).
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let (kind, value, reference, ratio, slope) = match self {
            Report::Inequality(r) => ("inequality", r.lhs, r.rhs, Some(r.ratio), r.metadata.get("slope").copied()),
            Report::Agreement(r) => ("agreement", r.estimate, r.reference, None, None),
            Report::Series(r) => {
                let last = r.points.last().map(|p| p.estimate).unwrap_or(McEstimate::exact(f64::NAN));
                ("series", last, McEstimate::exact(f64::NAN), None, Some(r.slope))
            }
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let fp = match self {
            Report::Inequality(r) => &r.fingerprint,
            Report::Agreement(r) => &r.fingerprint,
            Report::Series(r) => &r.fingerprint,
        };
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.name(),
            kind,
            self.passed(),
            value.mean,
            value.stderr,
            reference.mean,
            reference.stderr,
            opt(ratio),
            opt(slope),
            value.n_paths,
            value.seed,
            fp
        );
        s
    }
}

impl From<InequalityReport> for Report {
    fn from(r: InequalityReport) -> Self {
        Report::Inequality(r)
    }
}
impl From<AgreementReport> for Report {
    fn from(r: AgreementReport) -> Self {
        Report::Agreement(r)
    }
}
impl From<SeriesReport> for Report {
    fn from(r: SeriesReport) -> Self {
        Report::Series(r)
    }
}

/// Short SHA-256 digest identifying a scenario (model, coefficients, extras).
pub fn fingerprint(model: &DiagonalModel, coeffs: &CoefficientSet, extra: &serde_json::Value) -> String {
    let doc = serde_json::json!({ "model": model, "coefficients": coeffs.spec(), "extra": extra });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn require_bounded_inverse(coeffs: &CoefficientSet, model: &DiagonalModel) -> Result<f64> {
    let c = coeffs.bound_b_inverse().ok_or_else(|| {
        LabError::Capability("diffusion coefficient is not uniformly invertible".into())
    })?;
    if model.wiener_variances().iter().any(|q| *q <= 0.0) {
        return Err(LabError::Capability(
            "every Wiener mode needs positive variance for the gradient weight".into(),
        ));
    }
    Ok(c)
}
