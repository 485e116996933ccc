//! Time signals and scenario definitions.
//!
//! Regressors, disturbances and exogenous inputs are closed expressions over
//! `t` so that a scenario round-trips through a TOML file. The three bundled
//! scenarios live in `scenarios/*.toml` next to this crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::LawSpec;
use crate::extension::ExtensionScheme;
use crate::observer::{PlantFile, PlantSpec};
use crate::smallmat::{dot, Mat};

/// A real-valued function of time (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalExpr {
    Constant(f64),
    /// `amplitude * sin(frequency * t + phase)`, frequency in rad/s.
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `exp(-rate * t)`.
    ExpDecay { rate: f64 },
    Sum(Vec<SignalExpr>),
    Scale { factor: f64, expr: Box<SignalExpr> },
}

impl SignalExpr {
    pub fn zero() -> Self {
        SignalExpr::Constant(0.0)
    }

    pub fn sin(amplitude: f64, frequency: f64) -> Self {
        SignalExpr::Sin {
            amplitude,
            frequency,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SignalExpr::Constant(c) => *c,
            SignalExpr::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            SignalExpr::ExpDecay { rate } => (-rate * t).exp(),
            SignalExpr::Sum(terms) => terms.iter().map(|e| e.eval(t)).sum(),
            SignalExpr::Scale { factor, expr } => factor * expr.eval(t),
        }
    }

    /// Upper bound on `|eval(t)|` for `t >= 0`.
    pub fn abs_bound(&self) -> f64 {
        match self {
            SignalExpr::Constant(c) => c.abs(),
            SignalExpr::Sin { amplitude, .. } => amplitude.abs(),
            SignalExpr::ExpDecay { .. } => 1.0,
            SignalExpr::Sum(terms) => terms.iter().map(SignalExpr::abs_bound).sum(),
            SignalExpr::Scale { factor, expr } => factor.abs() * expr.abs_bound(),
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("{what} must be finite")))
            }
        };
        match self {
            SignalExpr::Constant(c) => finite(*c, "constant"),
            SignalExpr::Sin {
                amplitude,
                frequency,
                phase,
            } => {
                finite(*amplitude, "amplitude")?;
                finite(*frequency, "frequency")?;
                finite(*phase, "phase")
            }
            SignalExpr::ExpDecay { rate } => {
                finite(*rate, "rate")?;
                if *rate < 0.0 {
                    return Err(Error::invalid(field, "exp_decay rate must be >= 0"));
                }
                Ok(())
            }
            SignalExpr::Sum(terms) => terms.iter().try_for_each(|e| e.validate(field)),
            SignalExpr::Scale { factor, expr } => {
                finite(*factor, "factor")?;
                expr.validate(field)
            }
        }
    }
}

/// Linear regression `y(t) = phi(t)^T theta + w(t)` with synthetic signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub regressor: Vec<SignalExpr>,
    pub theta: Vec<f64>,
    #[serde(default = "SignalExpr::zero")]
    pub disturbance: SignalExpr,
}

impl RegressionSpec {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn eval_regressor(&self, t: f64) -> Vec<f64> {
        self.regressor.iter().map(|e| e.eval(t)).collect()
    }

    pub fn eval_disturbance(&self, t: f64) -> f64 {
        self.disturbance.eval(t)
    }

    pub fn eval_output(&self, t: f64) -> f64 {
        dot(&self.eval_regressor(t), &self.theta) + self.eval_disturbance(t)
    }

    fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::invalid("regression.theta", "must not be empty"));
        }
        if self.regressor.len() != self.theta.len() {
            return Err(Error::invalid(
                "regression.regressor",
                format!(
                    "has {} entries but theta has {}",
                    self.regressor.len(),
                    self.theta.len()
                ),
            ));
        }
        finite_all("regression.theta", &self.theta)?;
        for (i, e) in self.regressor.iter().enumerate() {
            e.validate(&format!("regression.regressor[{i}]"))?;
        }
        self.disturbance.validate("regression.disturbance")
    }
}

/// What produces the scalar regression fed to the extension filters.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // built once per run
pub enum Problem {
    /// Directly specified regression (scenarios A and B).
    Regression(RegressionSpec),
    /// Regression built by the state-observer filters (scenario C).
    Plant(PlantSpec),
}

impl Problem {
    /// Number of unknown parameters.
    pub fn dim(&self) -> usize {
        match self {
            Problem::Regression(r) => r.dim(),
            Problem::Plant(p) => p.theta.len(),
        }
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            Problem::Regression(r) => &r.theta,
            Problem::Plant(p) => &p.theta,
        }
    }
}

/// Which identification law a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Gradient,
    Averaging,
}

impl LawKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LawKind::Gradient => "gradient",
            LawKind::Averaging => "averaging",
        }
    }
}

/// A fully resolved, validated single-law run definition.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub problem: Problem,
    pub extension: ExtensionScheme,
    pub law: LawSpec,
    pub theta0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub sample_every: f64,
    /// Reference `eta` drawn as `eta * delta` next to the inequality lhs.
    pub eta_reference: Option<f64>,
}

impl ScenarioSpec {
    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step", "must be > 0"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be >= 0"));
        }
        if self.horizon > 0.0 && self.horizon < self.step {
            return Err(Error::invalid("horizon", "must exceed step"));
        }
        if !(self.sample_every >= self.step) {
            return Err(Error::invalid("sample_every", "must be >= step"));
        }
        let ratio = (self.sample_every / self.step).round();
        if (ratio * self.step - self.sample_every).abs() > 1e-12 {
            return Err(Error::invalid("sample_every", "must be a multiple of step"));
        }
        self.extension.validate()?;
        self.law.validate(n)?;
        if self.theta0.len() != n {
            return Err(Error::invalid(
                "theta0",
                format!("has {} entries, expected {n}", self.theta0.len()),
            ));
        }
        finite_all("theta0", &self.theta0)?;
        match &self.problem {
            Problem::Regression(r) => r.validate(),
            Problem::Plant(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientParams {
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingParams {
    pub gamma: f64,
    pub k: Vec<f64>,
    #[serde(default)]
    pub kappa0: f64,
    /// Reference `eta` for the inequality overlay; not used by the law.
    #[serde(default)]
    pub eta: Option<f64>,
}

/// Parameters of the state-reconstruction error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Defaults to the identity.
    #[serde(default)]
    pub q: Option<Mat>,
    /// Defaults to `lambda_min(q) / 2`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Defaults to the bound implied by the disturbance expressions.
    #[serde(default)]
    pub delta_max: Option<f64>,
}

/// Diagnostics settings carried by a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsParams {
    /// Sliding-window length for the persistent-excitation level.
    #[serde(default = "default_pe_window")]
    pub pe_window: f64,
    /// Fraction of the terminal minimum of delta used to detect `T`.
    #[serde(default = "default_detect_fraction")]
    pub detect_fraction: f64,
    /// Trailing share of the horizon treated as the terminal window.
    #[serde(default = "default_terminal_share")]
    pub terminal_share: f64,
}

fn default_pe_window() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_detect_fraction() -> f64 {
    0.9
}
fn default_terminal_share() -> f64 {
    0.1
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        DiagnosticsParams {
            pe_window: default_pe_window(),
            detect_fraction: default_detect_fraction(),
            terminal_share: default_terminal_share(),
        }
    }
}

/// On-disk scenario: problem, filters and the parameters of both laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub horizon: f64,
    pub step: f64,
    #[serde(default)]
    pub sample_every: Option<f64>,
    /// Times at which the summary records the parameter error.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub regression: Option<RegressionSpec>,
    #[serde(default)]
    pub plant: Option<PlantFile>,
    pub extension: ExtensionScheme,
    #[serde(default)]
    pub gradient: Option<GradientParams>,
    #[serde(default)]
    pub averaging: Option<AveragingParams>,
    #[serde(default)]
    pub bound: Option<BoundParams>,
    #[serde(default)]
    pub diagnostics: DiagnosticsParams,
}

impl ScenarioFile {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file serialises")
    }

    pub fn problem(&self) -> Result<Problem> {
        match (&self.regression, &self.plant) {
            (Some(r), None) => Ok(Problem::Regression(r.clone())),
            (None, Some(p)) => Ok(Problem::Plant(PlantSpec::try_from(p.clone())?)),
            (Some(_), Some(_)) => Err(Error::invalid(
                "regression",
                "a scenario defines either [regression] or [plant], not both",
            )),
            (None, None) => Err(Error::invalid("regression", "missing [regression] or [plant] table")),
        }
    }

    pub fn laws(&self) -> Vec<LawKind> {
        let mut out = Vec::new();
        if self.gradient.is_some() {
            out.push(LawKind::Gradient);
        }
        if self.averaging.is_some() {
            out.push(LawKind::Averaging);
        }
        out
    }

    /// Resolves and validates the run definition for one law.
    pub fn spec_for(&self, law: LawKind) -> Result<ScenarioSpec> {
        let problem = self.problem()?;
        let n = problem.dim();
        let (law_spec, eta_reference) = match law {
            LawKind::Gradient => {
                let g = self.gradient.as_ref().ok_or_else(|| {
                    Error::invalid("gradient", "scenario has no [gradient] table")
                })?;
                (LawSpec::Gradient { gamma: g.gamma }, None)
            }
            LawKind::Averaging => {
                let a = self.averaging.as_ref().ok_or_else(|| {
                    Error::invalid("averaging", "scenario has no [averaging] table")
                })?;
                (
                    LawSpec::Averaging {
                        gamma: a.gamma,
                        k: a.k.clone(),
                        kappa0: a.kappa0,
                    },
                    a.eta,
                )
            }
        };
        let spec = ScenarioSpec {
            name: self.name.clone(),
            problem,
            extension: self.extension.clone(),
            law: law_spec,
            theta0: self.theta0.clone().unwrap_or_else(|| vec![0.0; n]),
            horizon: self.horizon,
            step: self.step,
            sample_every: self.sample_every.unwrap_or(self.step),
            eta_reference,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every law the file defines.
    pub fn validate(&self) -> Result<()> {
        let laws = self.laws();
        if laws.is_empty() {
            return Err(Error::invalid("gradient", "define [gradient] and/or [averaging]"));
        }
        for law in laws {
            self.spec_for(law)?;
        }
        let d = &self.diagnostics;
        if !(d.pe_window > 0.0) {
            return Err(Error::invalid("diagnostics.pe_window", "must be > 0"));
        }
        if !(d.detect_fraction > 0.0 && d.detect_fraction <= 1.0) {
            return Err(Error::invalid("diagnostics.detect_fraction", "must be in (0, 1]"));
        }
        if !(d.terminal_share > 0.0 && d.terminal_share <= 1.0) {
            return Err(Error::invalid("diagnostics.terminal_share", "must be in (0, 1]"));
        }
        Ok(())
    }
}

pub(crate) fn finite_all(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("scenario_a", include_str!("../scenarios/scenario_a.toml")),
    ("scenario_b", include_str!("../scenarios/scenario_b.toml")),
    ("scenario_c", include_str!("../scenarios/scenario_c.toml")),
];

/// Names of the scenarios compiled into the library.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

/// Raw TOML of a bundled scenario.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

pub fn bundled(name: &str) -> Result<ScenarioFile> {
    let src = bundled_source(name)
        .ok_or_else(|| Error::invalid("scenario", format!("no bundled scenario named `{name}`")))?;
    let file = ScenarioFile::parse(src, name)?;
    file.validate()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn regression(name: &str) -> RegressionSpec {
        bundled(name).unwrap().regression.unwrap()
    }

    #[test]
    fn scenario_a_signals() {
        let a = regression("scenario_a");
        let phi = a.eval_regressor(PI / 2.0);
        assert!((phi[0] - 1.0).abs() < 1e-15 && phi[1] == 1.0);
        assert_eq!(a.eval_disturbance(0.0), 0.0);
        let expected = 1.0 + 0.2 * (0.05 * PI).sin();
        assert!((a.eval_disturbance(PI / 2.0) - expected).abs() < 1e-15);
        assert_eq!(a.eval_output(0.0), -1.0);
    }

    #[test]
    fn scenario_b_signals() {
        let b = regression("scenario_b");
        assert_eq!(b.eval_regressor(0.0), vec![1.0, 1.0]);
        assert_eq!(b.eval_output(0.0), 0.0);
        assert!(matches!(
            bundled("scenario_b").unwrap().extension,
            ExtensionScheme::FeDecay { mu } if mu == 10.0
        ));
    }

    #[test]
    fn zero_problem_is_silent() {
        let r = RegressionSpec {
            regressor: vec![SignalExpr::sin(1.0, 1.0), SignalExpr::Constant(1.0)],
            theta: vec![0.0, 0.0],
            disturbance: SignalExpr::zero(),
        };
        for t in [0.0, 0.3, 17.0, 1e4] {
            assert_eq!(r.eval_output(t), 0.0);
            assert_eq!(r.eval_disturbance(t), 0.0);
        }
    }

    #[test]
    fn registry_matches_published_parameters() {
        let a = bundled("scenario_a").unwrap();
        assert_eq!(a.extension, ExtensionScheme::Kreisselmeier { l: 1.0 });
        assert_eq!(a.gradient.as_ref().unwrap().gamma, 1e2);
        let avg = a.averaging.as_ref().unwrap();
        assert_eq!((avg.gamma, avg.k.clone()), (1e4, vec![1e-3, 1e-3]));
        assert_eq!(a.regression.as_ref().unwrap().theta, vec![1.0, -1.0]);

        let b = bundled("scenario_b").unwrap();
        assert_eq!(b.extension, ExtensionScheme::FeDecay { mu: 10.0 });
        assert_eq!(b.gradient.as_ref().unwrap().gamma, 1.0);
        let avg = b.averaging.as_ref().unwrap();
        assert_eq!((avg.gamma, avg.k.clone()), (250.0, vec![1e-3, 1e-3]));

        let c = bundled("scenario_c").unwrap();
        assert_eq!(c.extension, ExtensionScheme::Kreisselmeier { l: 1.0 });
        assert_eq!(c.gradient.as_ref().unwrap().gamma, 1e2);
        let avg = c.averaging.as_ref().unwrap();
        assert_eq!((avg.gamma, avg.k.clone()), (1e3, vec![0.01]));
        let plant = c.plant.as_ref().unwrap();
        assert_eq!(plant.k.to_rows(), vec![vec![100.0], vec![1.0]]);
        assert_eq!(plant.theta, vec![0.2]);
    }

    #[test]
    fn output_minus_model_is_disturbance() {
        let a = regression("scenario_a");
        for i in 0..200 {
            let t = i as f64 * 0.37;
            let lhs = a.eval_output(t) - dot(&a.eval_regressor(t), &a.theta);
            assert!((lhs - a.eval_disturbance(t)).abs() <= 1e-15 * (1.0 + a.eval_output(t).abs()));
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        let src = bundled_source("scenario_a").unwrap().replace("horizon", "horizn");
        let err = ScenarioFile::parse(&src, "bad").unwrap_err();
        assert!(err.to_string().contains("horizn"), "{err}");
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn rejects_nonpositive_k() {
        let src = bundled_source("scenario_a")
            .unwrap()
            .replace("k = [1e-3, 1e-3]", "k = [0.0, 1e-3]");
        let file = ScenarioFile::parse(&src, "bad").unwrap();
        let err = file.validate().unwrap_err();
        assert!(err.to_string().contains("k_i must be > 0"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        for name in bundled_names() {
            let file = bundled(name).unwrap();
            let again = ScenarioFile::parse(&file.to_toml(), name).unwrap();
            assert_eq!(file, again);
        }
    }

    #[test]
    fn abs_bound_covers_samples() {
        let e = SignalExpr::Sum(vec![
            SignalExpr::sin(5.0, 5.0),
            SignalExpr::sin(0.2, 1.0),
            SignalExpr::Constant(1.0),
        ]);
        assert!((e.abs_bound() - 6.2).abs() < 1e-12);
        assert!((0..1000).all(|i| e.eval(i as f64 * 0.01).abs() <= e.abs_bound()));
    }
}
