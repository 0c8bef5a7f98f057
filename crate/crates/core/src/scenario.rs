//! Declarative scenarios: one TOML file describes the model, the coefficient
//! set, the Monte Carlo budget and the checks to run. Dotted-path overrides
//! (`run.n_paths=2000`) are applied to the parsed tree before validation, so
//! every diagnostic names the offending field.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coefficients::{omega1, CoefficientSet, CoefficientSpec, PerMode};
use crate::error::{LabError, Result};
use crate::estimators::{
    additive_moment_report, bismut_elworthy_report, bj_inequality_report, fingerprint,
    generator_consistency_report, lipschitz_report, ou_moment_reports, resolvent_gradient_report,
    second_variation_report, strong_feller_report, weak_error_report, weak_error_study, yosida_convergence_report,
    BjIntegrand, McConfig, Report, StrongFellerOptions,
};
use crate::functional::TestFunctional;
use crate::marks::MarkLaw;
use crate::noise::sample_noise;
use crate::sensitivity::first_variation;
use crate::solver::simulate_path;
use crate::spectral::{heat_spectrum, DiagonalModel};

fn one() -> f64 {
    1.0
}
fn one_mode() -> PerMode {
    PerMode::Scalar(1.0)
}

/// Model block. Eigenvalues default to the heat spectrum `−π²k²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    /// Upper bound on the spectrum; defaults to `max(0, max a_k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Wiener covariance eigenvalues `q_k`.
    #[serde(default = "one_mode")]
    pub q: PerMode,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default)]
    pub marks: MarkLaw,
    #[serde(default = "one")]
    pub horizon: f64,
}

impl ModelConfig {
    pub fn build(&self) -> Result<DiagonalModel> {
        if self.dim == 0 {
            return Err(LabError::config("model.dim", "must be positive"));
        }
        let eig = match &self.eigenvalues {
            Some(e) if e.len() != self.dim => {
                return Err(LabError::config(
                    "model.eigenvalues",
                    format!("expected {} entries, got {}", self.dim, e.len()),
                ))
            }
            Some(e) => e.clone(),
            None => heat_spectrum(self.dim),
        };
        let eta = self.eta.unwrap_or_else(|| eig.iter().copied().fold(0.0, f64::max));
        let q = self.q.resolve(self.dim, "model.q")?;
        DiagonalModel::new(eig, eta, q, self.jump_rate, self.marks.clone(), self.horizon)
    }
}

/// Names of the checks a scenario can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Lipschitz,
    AdditiveMoment,
    Bj,
    BjConvolution,
    Yosida,
    BismutElworthy,
    Resolvent,
    StrongFeller,
    Generator,
    Moments,
    WeakError,
    WeakOrder,
    SecondVariation,
}

impl CheckName {
    pub const ALL: [CheckName; 13] = [
        CheckName::Lipschitz,
        CheckName::AdditiveMoment,
        CheckName::Bj,
        CheckName::BjConvolution,
        CheckName::Yosida,
        CheckName::BismutElworthy,
        CheckName::Resolvent,
        CheckName::StrongFeller,
        CheckName::Generator,
        CheckName::Moments,
        CheckName::WeakError,
        CheckName::WeakOrder,
        CheckName::SecondVariation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Lipschitz => "lipschitz",
            CheckName::AdditiveMoment => "additive_moment",
            CheckName::Bj => "bj",
            CheckName::BjConvolution => "bj_convolution",
            CheckName::Yosida => "yosida",
            CheckName::BismutElworthy => "bismut_elworthy",
            CheckName::Resolvent => "resolvent",
            CheckName::StrongFeller => "strong_feller",
            CheckName::Generator => "generator",
            CheckName::Moments => "moments",
            CheckName::WeakError => "weak_error",
            CheckName::WeakOrder => "weak_order",
            CheckName::SecondVariation => "second_variation",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CheckName {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| LabError::config("checks.enabled", format!("unknown check `{s}`")))
    }
}

fn default_paths() -> u64 {
    10_000
}
fn default_steps() -> usize {
    100
}
fn default_margin() -> f64 {
    3.0
}
fn default_p() -> f64 {
    4.0
}
fn default_bj_constant() -> f64 {
    2.0
}
fn default_ladder() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0]
}
fn default_h_ladder() -> Vec<f64> {
    (1..=5).map(|k| 0.5f64.powi(k)).collect()
}
fn default_step_ladder() -> Vec<usize> {
    (4..=9).map(|k| 1usize << k).collect()
}
fn default_weak_band() -> (f64, f64) {
    (0.8, 1.5)
}
fn default_weak_budget() -> f64 {
    0.05
}
fn default_fd_h() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    8.0
}
fn default_n_quad() -> usize {
    201
}
fn default_min_slope() -> f64 {
    0.5
}
fn default_phi() -> TestFunctional {
    TestFunctional::Sine { index: 0 }
}

/// Run block: Monte Carlo budget and per-check parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// Master seed; at most `i64::MAX`, the largest TOML integer.
    #[serde(default)]
    pub seed: u64,
    /// Pass margin in standard errors.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Starting point; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Second starting point for coupled checks; defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Direction of differentiation; defaults to the first unit vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Mode observed by the closed-form moment checks.
    #[serde(default)]
    pub index: usize,
    /// Moment order for the maximal inequality.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Constant the maximal-inequality ratio is checked against.
    #[serde(default = "default_bj_constant")]
    pub bj_constant: f64,
    /// Deterministic integrand for the maximal inequality; `None` integrates along the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bj_integrand: Option<Vec<f64>>,
    #[serde(default = "default_phi")]
    pub phi: TestFunctional,
    /// Evaluation time for gradient checks; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default = "default_fd_h")]
    pub fd_h: f64,
    /// Resolvent parameter; defaults to `ω₁ + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    #[serde(default)]
    pub strong_feller: StrongFellerOptions,
    #[serde(default = "default_ladder")]
    pub lambda_ladder: Vec<f64>,
    /// Absolute tolerance on the last Yosida distance; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yosida_tolerance: Option<f64>,
    #[serde(default = "default_h_ladder")]
    pub h_ladder: Vec<f64>,
    #[serde(default = "default_min_slope")]
    pub generator_min_slope: f64,
    /// Point at which the generator is evaluated; defaults to `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_at: Option<Vec<f64>>,
    #[serde(default = "default_step_ladder")]
    pub step_ladder: Vec<usize>,
    #[serde(default = "default_weak_band")]
    pub weak_order_band: (f64, f64),
    /// Absolute tolerance on the weak error at the configured step.
    #[serde(default = "default_weak_budget")]
    pub weak_error_budget: f64,
    /// Tolerated gap between the second variation with and without its
    /// diffusion terms.
    #[serde(default)]
    pub second_variation_tolerance: f64,
    /// Number of individual paths (with noise and first variation) written as CSV.
    #[serde(default)]
    pub dump_paths: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every run field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub enabled: Vec<CheckName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelConfig,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

/// A scenario whose model and coefficients have been built and whose
/// requested checks have been matched against the declared capabilities.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub model: DiagonalModel,
    pub coeffs: CoefficientSet,
}

/// Set `path` (dotted) in `root` to the TOML literal `raw`; bare words that do
/// not parse as TOML are taken as strings.
pub fn apply_override(root: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let field = || format!("--set {path}");
    let value = parse_literal(raw);
    let mut keys = path.split('.').peekable();
    let mut table = root;
    while let Some(key) = keys.next() {
        if key.is_empty() {
            return Err(LabError::config(field(), "empty path segment"));
        }
        if keys.peek().is_none() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| LabError::config(field(), format!("`{key}` is not a table")))?;
    }
    Err(LabError::config(field(), "empty path"))
}

fn parse_literal(raw: &str) -> toml::Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Split `KEY=VALUE`.
pub fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v))
        .ok_or_else(|| LabError::config("--set", format!("expected KEY=VALUE, got `{s}`")))
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    toml::from_str(text).map_err(|e| {
        let field = e
            .span()
            .map(|s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            })
            .unwrap_or_else(|| "<document>".into());
        LabError::config(field, e.message().to_string())
    })
}

impl Scenario {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            LabError::config(if path == "." { "<document>".into() } else { path }, e.into_inner().to_string())
        })
    }

    /// Parse TOML text and apply `overrides` (`(dotted.path, literal)` pairs).
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        Self::from_table(table)
    }

    /// Append checks not already enabled (before [`Scenario::load`], so they
    /// are validated like configured ones).
    pub fn enable(&mut self, checks: &[CheckName]) {
        for c in checks {
            if !self.checks.enabled.contains(c) {
                self.checks.enabled.push(*c);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Build the model and coefficients and reject checks the coefficient
    /// family cannot support.
    pub fn load(self) -> Result<LoadedScenario> {
        let model = self.model.build()?;
        let coeffs = CoefficientSet::new(&self.coefficients, &model).map_err(|e| match e {
            LabError::Config { field, message } if !field.starts_with("coefficients") => {
                LabError::config(format!("coefficients.{field}"), message)
            }
            other => other,
        })?;
        let loaded = LoadedScenario { scenario: self, model, coeffs };
        loaded.validate()?;
        Ok(loaded)
    }
}

impl LoadedScenario {
    fn d(&self) -> usize {
        self.model.dim()
    }

    fn vector(&self, field: &str, v: &Option<Vec<f64>>, default: Vec<f64>) -> Result<Vec<f64>> {
        match v {
            Some(v) if v.len() != self.d() => Err(LabError::config(
                format!("run.{field}"),
                format!("expected {} entries, got {}", self.d(), v.len()),
            )),
            Some(v) => Ok(v.clone()),
            None => Ok(default),
        }
    }

    pub fn x0(&self) -> Result<Vec<f64>> {
        self.vector("x0", &self.scenario.run.x0, vec![1.0; self.d()])
    }

    pub fn y0(&self) -> Result<Vec<f64>> {
        self.vector("y0", &self.scenario.run.y0, vec![0.0; self.d()])
    }

    pub fn direction(&self) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.d()];
        e[0] = 1.0;
        self.vector("direction", &self.scenario.run.direction, e)
    }

    pub fn mc(&self) -> McConfig {
        let r = &self.scenario.run;
        McConfig { n_paths: r.n_paths, n_steps: r.n_steps, seed: r.seed, margin: r.margin }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.model, &self.coeffs, &serde_json::json!({ "run": self.scenario.run }))
    }

    fn validate(&self) -> Result<()> {
        let run = &self.scenario.run;
        let checks = &self.scenario.checks.enabled;
        if run.n_paths == 0 {
            return Err(LabError::config("run.n_paths", "must be positive"));
        }
        if run.n_steps == 0 {
            return Err(LabError::config("run.n_steps", "must be positive"));
        }
        if !(run.margin >= 0.0) {
            return Err(LabError::config("run.margin", "must be >= 0"));
        }
        self.x0()?;
        self.y0()?;
        self.direction()?;
        if let Some(b) = &run.bj_integrand {
            if b.len() != self.d() {
                return Err(LabError::config("run.bj_integrand", format!("expected {} entries", self.d())));
            }
        }
        run.phi.validate(self.d()).map_err(|_| LabError::config("run.phi.index", "out of range"))?;
        if run.index >= self.d() {
            return Err(LabError::config("run.index", "out of range"));
        }

        let capability = |i: usize, what: String| {
            Err(LabError::Capability(format!("checks.enabled[{i}] = {}: {what}", checks[i])))
        };
        // declared by the family and verified when the coefficient set was built
        let invertible = self.scenario.coefficients.require_invertible
            && self.coeffs.bound_b_inverse().is_some()
            && self.model.wiener_variances().iter().all(|q| *q > 0.0);
        for (i, check) in checks.iter().enumerate() {
            match check {
                CheckName::BismutElworthy | CheckName::StrongFeller if !invertible => {
                    return capability(
                        i,
                        "needs a uniformly invertible diffusion (declare `coefficients.require_invertible`) \
                         and positive Wiener variances"
                            .into(),
                    );
                }
                CheckName::Moments | CheckName::WeakError | CheckName::WeakOrder
                    if self.coeffs.linear_structure().is_none() =>
                {
                    return capability(i, "closed form needs linear drift with additive noise".into());
                }
                CheckName::AdditiveMoment if !self.coeffs.is_additive() => {
                    return capability(i, "needs state-independent diffusion and jumps".into());
                }
                CheckName::StrongFeller if run.phi.sup_norm().is_none() => {
                    return capability(i, format!("test functional {:?} is unbounded", run.phi));
                }
                CheckName::Resolvent if run.phi.lipschitz().is_none() => {
                    return capability(i, format!("test functional {:?} is not Lipschitz", run.phi));
                }
                CheckName::SecondVariation if self.coeffs.derivative_order() < 2 => {
                    return capability(i, "coefficient set does not declare second derivatives".into());
                }
                CheckName::Generator if matches!(run.phi, TestFunctional::Step { .. }) => {
                    return capability(i, "step functional has no generator".into());
                }
                CheckName::Resolvent => {
                    let omega = omega1(&self.model, &self.coeffs);
                    if let Some(a) = run.alpha {
                        if !(a > omega) {
                            return Err(LabError::config("run.alpha", format!("must exceed omega1 = {omega}")));
                        }
                    }
                }
                CheckName::Lipschitz | CheckName::AdditiveMoment if self.x0()? == self.y0()? => {
                    return Err(LabError::config("run.y0", "must differ from x0"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Run one check; a check may yield several reports.
    pub fn run_check(&self, check: CheckName) -> Result<Vec<Report>> {
        let run = &self.scenario.run;
        let (m, c, mc) = (&self.model, &self.coeffs, self.mc());
        let x0 = self.x0()?;
        let t = run.t.unwrap_or(m.horizon());
        let out: Vec<Report> = match check {
            CheckName::Lipschitz => vec![lipschitz_report(m, c, &x0, &self.y0()?, &mc)?.into()],
            CheckName::AdditiveMoment => {
                vec![additive_moment_report(m, c, run.p, &x0, &self.y0()?, &mc)?.into()]
            }
            CheckName::Bj | CheckName::BjConvolution => {
                let integrand = match &run.bj_integrand {
                    Some(v) => BjIntegrand::Constant { value: v.clone() },
                    None => BjIntegrand::AlongPath { x0: x0.clone() },
                };
                let conv = check == CheckName::BjConvolution;
                vec![bj_inequality_report(m, c, run.p, &integrand, conv, run.bj_constant, &mc)?.into()]
            }
            CheckName::Yosida => {
                let tol = run.yosida_tolerance.unwrap_or(f64::MAX);
                vec![yosida_convergence_report(m, c, &x0, &run.lambda_ladder, tol, &mc)?.into()]
            }
            CheckName::BismutElworthy => {
                vec![bismut_elworthy_report(m, c, &run.phi, t, &x0, &self.direction()?, run.fd_h, &mc)?.into()]
            }
            CheckName::Resolvent => {
                let alpha = run.alpha.unwrap_or_else(|| omega1(m, c) + 1.0);
                vec![resolvent_gradient_report(m, c, &run.phi, alpha, &x0, &self.direction()?, run.t_max, run.n_quad, &mc)?
                    .into()]
            }
            CheckName::StrongFeller => {
                vec![strong_feller_report(m, c, &run.phi, t, &x0, &self.y0()?, &run.strong_feller, &mc)?.into()]
            }
            CheckName::Generator => {
                let at = self.vector("generator_at", &run.generator_at, x0.clone())?;
                vec![generator_consistency_report(m, c, &run.phi, &at, &run.h_ladder, run.generator_min_slope, &mc)?
                    .into()]
            }
            CheckName::Moments => ou_moment_reports(m, c, &x0, run.index, &mc)?.into_iter().map(Report::from).collect(),
            CheckName::SecondVariation => {
                let y = self.direction()?;
                vec![second_variation_report(m, c, &x0, &y, &y, run.index, run.second_variation_tolerance, &mc)?.into()]
            }
            CheckName::WeakError => vec![weak_error_report(m, c, &x0, run.index, run.weak_error_budget, &mc)?.into()],
            CheckName::WeakOrder => {
                vec![weak_error_study(m, c, &x0, run.index, &run.step_ladder, run.weak_order_band, &mc)?.into()]
            }
        };
        Ok(out)
    }

    /// Per-path trajectory, noise and first-variation CSVs for the first
    /// `run.dump_paths` paths, as `(file name, contents)`.
    pub fn path_dumps(&self) -> Result<Vec<(String, String)>> {
        let run = &self.scenario.run;
        let x0 = self.x0()?;
        let y = self.direction()?;
        let mut out = Vec::new();
        for i in 0..run.dump_paths.min(run.n_paths) {
            let noise = sample_noise(&self.model, run.n_steps, i, run.seed)?;
            let path = simulate_path(&self.model, &self.coeffs, &x0, &noise)?;
            let v = first_variation(&self.model, &self.coeffs, &path, &y, &noise)?;
            out.push((format!("path_{i}.csv"), path.to_csv()));
            out.push((format!("noise_{i}.csv"), noise.to_csv()));
            out.push((format!("variation_{i}.csv"), v.to_csv()));
        }
        Ok(out)
    }

    /// Run every enabled check in order.
    pub fn run_all(&self) -> Result<Vec<Report>> {
        let mut reports = Vec::new();
        for &check in &self.scenario.checks.enabled {
            reports.extend(self.run_check(check)?);
        }
        Ok(reports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"
[model]
dim = 4
q = 1.0
jump_rate = 2.0
marks = { law = "gaussian" }

[coefficients]
drift = { family = "nemytskii-sin", c = 1.0 }
diffusion = { family = "additive", b = 0.5 }
jump = { family = "jump-sine", c0 = 0.3 }

[run]
n_paths = 200
n_steps = 40

[checks]
enabled = ["lipschitz", "bj"]
"#;

    #[test]
    fn parse_and_roundtrip() {
        let s = Scenario::parse(HEAT, &[]).unwrap();
        assert_eq!(s.model.dim, 4);
        assert_eq!(s.checks.enabled, vec![CheckName::Lipschitz, CheckName::Bj]);
        let back = Scenario::parse(&s.to_toml(), &[]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let s = Scenario::parse(
            HEAT,
            &[
                ("run.n_paths".into(), "17".into()),
                ("model.marks.law".into(), "uniform".into()),
                ("model.marks.lo".into(), "-1".into()),
                ("model.marks.hi".into(), "2".into()),
                ("run.x0".into(), "[1, 2, 3, 4]".into()),
            ],
        )
        .unwrap();
        assert_eq!(s.run.n_paths, 17);
        assert_eq!(s.model.marks, MarkLaw::Uniform { lo: -1.0, hi: 2.0 });
        assert_eq!(s.run.x0, Some(vec![1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn errors_name_the_field() {
        let e = Scenario::parse(HEAT, &[("run.n_paths".into(), "\"many\"".into())]).unwrap_err();
        assert!(matches!(&e, LabError::Config { field, .. } if field == "run.n_paths"), "{e}");
        let e = Scenario::parse(HEAT, &[("run.bogus".into(), "1".into())]).unwrap_err();
        assert!(matches!(&e, LabError::Config { .. }), "{e}");
        let e = Scenario::parse("[model\ndim = 1", &[]).unwrap_err();
        assert!(matches!(&e, LabError::Config { field, .. } if field.starts_with("line")), "{e}");
        let e = Scenario::parse(HEAT, &[("run.x0".into(), "[1.0]".into())]).unwrap().load().unwrap_err();
        assert!(matches!(&e, LabError::Config { field, .. } if field == "run.x0"), "{e}");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn capability_rejected_at_load() {
        let e = Scenario::parse(HEAT, &[("checks.enabled".into(), "[\"bismut_elworthy\"]".into())])
            .unwrap()
            .load()
            .unwrap_err();
        assert!(matches!(&e, LabError::Capability(m) if m.contains("checks.enabled[0]")), "{e}");
        assert_eq!(e.exit_code(), 4);
        let e = Scenario::parse(HEAT, &[("checks.enabled".into(), "[\"moments\"]".into())])
            .unwrap()
            .load()
            .unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn empty_checks_yield_no_reports() {
        let s = Scenario::parse(HEAT, &[("checks.enabled".into(), "[]".into())]).unwrap().load().unwrap();
        assert!(s.run_all().unwrap().is_empty());
    }

    #[test]
    fn default_heat_scenario_passes() {
        let s = Scenario::parse(HEAT, &[]).unwrap().load().unwrap();
        let reports = s.run_all().unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(Report::passed), "{reports:?}");
    }

    #[test]
    fn dumps_paths_on_request() {
        let s = Scenario::parse(HEAT, &[("run.dump_paths".into(), "2".into())]).unwrap().load().unwrap();
        let files = s.path_dumps().unwrap();
        assert_eq!(files.len(), 6);
        assert!(files[0].1.starts_with("time,u_1,u_2,u_3,u_4,is_jump"));
        assert!(files[2].1.lines().nth(1).unwrap().ends_with(",v"));
    }

    #[test]
    fn check_names_parse() {
        for c in CheckName::ALL {
            assert_eq!(c.as_str().parse::<CheckName>().unwrap(), c);
        }
        assert!("nope".parse::<CheckName>().is_err());
    }
}
