use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{load_config, RunConfig};
use super::trace_io::write_csv;
use crate::diagnostics::{excitation_report, p3_bound, s1_bound, terminal_max, ExcitationReport};
use crate::error::{Error, Result};
use crate::integrator::Trace;
use crate::observer::{epsilon_x_bound, PlantSpec};
use crate::signals::{LawKind, Problem, ScenarioFile};
use crate::smallmat::{sym_eigenvalues, Mat};
use crate::system::DremSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub theta_tilde: Vec<f64>,
}

/// Every number the acceptance checks need, so nothing has to reparse CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub law: LawKind,
    pub step: f64,
    pub horizon: f64,
    pub samples: usize,
    /// Set when the integration stopped early.
    pub failure: Option<String>,
    pub theta: Vec<f64>,
    pub t_final: f64,
    pub theta_hat_final: Vec<f64>,
    pub theta_tilde_final: Vec<f64>,
    /// `sup_t |theta_tilde_i|` over the whole trace.
    pub theta_tilde_sup: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// `max |delta_jacobi - delta|`.
    pub jacobi_max_dev: f64,
    /// `max_t |scalY_i - delta theta_i - scalW_i|` per channel.
    pub mixing_residual_max: Vec<f64>,
    pub eta_max: Option<f64>,
    pub w_max: Option<f64>,
    /// C2 supremum per channel (estimate of `c_W`).
    pub c_w: Option<Vec<f64>>,
    pub c2_bounded: Option<Vec<bool>>,
    pub t_detect: Option<f64>,
    pub delta_lb: Option<f64>,
    pub delta_ub: Option<f64>,
    pub kappa_tilde_at_detect: Option<f64>,
    /// Averaging-law bound on `sup |theta_tilde_i|`, per channel.
    pub s1_bound: Option<Vec<f64>>,
    /// Gradient-law asymptotic bound on `|theta_tilde_i|`.
    pub p3_bound: Option<f64>,
    /// Why the excitation report could not be produced, if it could not.
    pub diagnostics_error: Option<String>,
    pub xtilde_final: Option<f64>,
    /// `max ||x_tilde||` over the terminal window.
    pub xtilde_terminal_max: Option<f64>,
    pub epsilon_x: Option<f64>,
    pub e_identity_residual_max: Option<f64>,
    pub regression_residual_max: Option<f64>,
}

/// Output of one (scenario, law) simulation, before anything hits disk.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub report: Option<ExcitationReport>,
    pub summary: Summary,
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `epsilon_x` for a plant scenario with the file's `[bound]` settings
/// (defaults: `Q = I`, `c = lambda_min(Q) / 2`, `delta_max` from the
/// disturbance expressions).
pub fn plant_bound(file: &ScenarioFile) -> Result<f64> {
    let plant = match file.problem()? {
        Problem::Plant(p) => p,
        Problem::Regression(_) => {
            return Err(Error::invalid("plant", "scenario has no [plant] table; epsilon_x is undefined"))
        }
    };
    bound_for(&plant, file)
}

fn bound_for(plant: &PlantSpec, file: &ScenarioFile) -> Result<f64> {
    let b = file.bound.clone().unwrap_or(crate::signals::BoundParams {
        q: None,
        c: None,
        delta_max: None,
    });
    let q = b.q.unwrap_or_else(|| Mat::identity(plant.state_dim()));
    let c = match b.c {
        Some(c) => c,
        None => 0.5 * sym_eigenvalues(&q)?[0],
    };
    epsilon_x_bound(plant, b.delta_max.unwrap_or_else(|| plant.delta_bound()), &q, c)
}

/// Simulates one law of a scenario and evaluates all diagnostics.
pub fn simulate(file: &ScenarioFile, law: LawKind) -> Result<RunResult> {
    let spec = file.spec_for(law)?;
    let sys = DremSystem::new(&spec)?;
    let (trace, failure) = sys.run()?;
    let n = spec.dim();
    let theta = spec.problem.theta().to_vec();
    let col = |name: &str| trace.require(name);

    let last = trace.rows.last().ok_or_else(|| Error::Diagnostics("empty trace".into()))?;
    let pick = |row: &[f64], prefix: &str| -> Result<Vec<f64>> {
        (1..=n)
            .map(|i| {
                let name = format!("{prefix}_{i}");
                trace.index(&name).map(|j| row[j]).ok_or_else(|| Error::Diagnostics(format!("missing {name}")))
            })
            .collect()
    };
    let mut theta_tilde_sup = Vec::new();
    let mut mixing = Vec::new();
    let delta = col("delta")?;
    for i in 1..=n {
        theta_tilde_sup.push(max_abs(col(&format!("theta_tilde_{i}"))?));
        let y = col(&format!("scalY_{i}"))?;
        let w = col(&format!("scalW_{i}"))?;
        mixing.push(max_abs((0..y.len()).map(|k| y[k] - delta[k] * theta[i - 1] - w[k])));
    }
    let jac = col("delta_jacobi")?;
    let checkpoints = file
        .checkpoints
        .iter()
        .filter(|t| **t <= trace.rows.last().map_or(0.0, |r| r[0]) + 1e-9)
        .map(|&t| {
            let row = trace.row_near(t).expect("non-empty trace");
            Ok(Checkpoint { t: row[0], theta_tilde: pick(row, "theta_tilde")? })
        })
        .collect::<Result<Vec<_>>>()?;

    let (report, diagnostics_error) = match excitation_report(&trace, &file.diagnostics) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let r = report.as_ref();
    let s1 = r.filter(|_| law == LawKind::Averaging).and_then(|r| {
        r.kappa_tilde_at_detect.map(|k| {
            theta.iter().map(|th| s1_bound(k, r.delta_lb, r.delta_ub, r.w_max, *th)).collect()
        })
    });
    let p3 = r.filter(|_| law == LawKind::Gradient).map(|r| p3_bound(r.w_max, r.delta_ub, r.delta_lb));

    let mut summary = Summary {
        scenario: spec.name.clone(),
        law,
        step: spec.step,
        horizon: spec.horizon,
        samples: trace.len(),
        failure: failure.map(|e| e.to_string()),
        theta: theta.clone(),
        t_final: last[0],
        theta_hat_final: pick(last, "theta_hat")?,
        theta_tilde_final: pick(last, "theta_tilde")?,
        theta_tilde_sup,
        checkpoints,
        jacobi_max_dev: max_abs(jac.iter().zip(&delta).map(|(a, b)| a - b)),
        mixing_residual_max: mixing,
        eta_max: r.and_then(|r| r.eta_max),
        w_max: r.map(|r| r.w_max),
        c_w: r.map(|r| r.c2_sup.clone()),
        c2_bounded: r.map(|r| r.c2_bounded.clone()),
        t_detect: r.map(|r| r.t_detect),
        delta_lb: r.map(|r| r.delta_lb),
        delta_ub: r.map(|r| r.delta_ub),
        kappa_tilde_at_detect: r.and_then(|r| r.kappa_tilde_at_detect),
        s1_bound: s1,
        p3_bound: p3,
        diagnostics_error,
        xtilde_final: None,
        xtilde_terminal_max: None,
        epsilon_x: None,
        e_identity_residual_max: None,
        regression_residual_max: None,
    };
    if let Problem::Plant(plant) = &spec.problem {
        let xt = col("xtilde_norm")?;
        summary.xtilde_final = xt.last().copied();
        summary.xtilde_terminal_max = Some(terminal_max(&xt, file.diagnostics.terminal_share));
        summary.epsilon_x = Some(bound_for(plant, file)?);
        summary.e_identity_residual_max = Some(max_abs(col("e_identity_residual")?));
        summary.regression_residual_max = Some(max_abs(col("regression_residual")?));
    }
    Ok(RunResult { trace, report, summary })
}

/// Files written for one law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub law: LawKind,
    pub trace: PathBuf,
    pub report: Option<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub runs: Vec<RunArtifacts>,
}

impl Bundle {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.summary.failure.is_some())
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn persist(result: &RunResult, out_dir: &Path) -> Result<RunArtifacts> {
    let stem = format!("{}_{}", result.summary.scenario, result.summary.law.as_str());
    let trace = out_dir.join(format!("{stem}.csv"));
    write_csv(&result.trace, &trace)?;
    let report = match &result.report {
        Some(r) => {
            let p = out_dir.join(format!("{stem}_report.json"));
            write_json(r, &p)?;
            Some(p)
        }
        None => None,
    };
    let summary_path = out_dir.join(format!("{stem}_summary.json"));
    write_json(&result.summary, &summary_path)?;
    Ok(RunArtifacts {
        law: result.summary.law,
        trace,
        report,
        summary_path,
        summary: result.summary.clone(),
    })
}

/// Loads, runs (laws in parallel) and writes trace CSV, excitation report
/// and summary per law into `config.out_dir`.
pub fn run_experiment(config: &RunConfig) -> Result<Bundle> {
    let file = load_config(config)?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let laws = config.law.laws();
    let results: Vec<Result<RunResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = laws
            .iter()
            .map(|law| {
                let file = &file;
                s.spawn(move || simulate(file, *law))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.push(persist(&r?, &config.out_dir)?);
    }
    Ok(Bundle { runs })
}
