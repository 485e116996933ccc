//! The coupled plant + filters + extension + estimator system of one run.

use crate::error::{Error, Result};
use crate::estimators::{inequality_lhs, law_rhs, EstimatorState, LawSpec};
use crate::extension::ExtensionState;
use crate::integrator::{integrate, Block, OdeSystem, Outcome, Schedule, StateLayout, Trace};
use crate::mixing::{mix_with_rate, MixedSignals};
use crate::observer::{
    build_regression, fused_rates, reconstruct_state, PlantBlocks, PlantRates, ObserverState, PlantSpec,
};
use crate::signals::{Problem, ScenarioSpec};
use crate::smallmat::{norm2, Mat};
use smallvec::SmallVec;

pub struct DremSystem {
    spec: ScenarioSpec,
    layout: StateLayout,
    n: usize,
    at: Offsets,
}

type Range = std::ops::Range<usize>;

/// Block ranges resolved once, so the right-hand side never looks up names.
struct Offsets {
    plant: Option<[Block; 6]>,
    y: Range,
    phi: Block,
    w: Range,
    theta_hat: Range,
    kappa_hat: Option<usize>,
    delta_jacobi: usize,
}

/// Signals derived from one state at one instant.
struct Snapshot {
    regressor: Vec<f64>,
    mixed: MixedSignals,
    est: EstimatorState,
    obs: Option<ObserverState>,
}

fn mat(b: &Block, s: &[f64]) -> Mat {
    Mat::from_slice(b.rows, b.cols, &s[b.range()]).expect("block shape")
}

impl DremSystem {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.dim();
        let mut layout = StateLayout::new();
        if let Problem::Plant(p) = &spec.problem {
            let nx = p.state_dim();
            layout
                .push("x", nx, 1)
                .push("chi", nx, 1)
                .push("P", nx, 1)
                .push("Omega", nx, n)
                .push("Phi_K", nx, nx)
                .push("delta_f", nx, 1);
        }
        layout.push("Y", n, 1).push("Phi", n, n).push("W", n, 1).push("theta_hat", n, 1);
        if spec.law.has_kappa() {
            layout.push("kappa_hat", 1, 1);
        }
        layout.push("delta_jacobi", 1, 1);
        let get = |name| layout.block(name).cloned().expect("block just pushed");
        let at = Offsets {
            plant: matches!(spec.problem, Problem::Plant(_))
                .then(|| ["x", "chi", "P", "Omega", "Phi_K", "delta_f"].map(get)),
            y: get("Y").range(),
            phi: get("Phi"),
            w: get("W").range(),
            theta_hat: get("theta_hat").range(),
            kappa_hat: layout.block("kappa_hat").map(|b| b.offset),
            delta_jacobi: get("delta_jacobi").offset,
        };
        Ok(DremSystem {
            spec: spec.clone(),
            layout,
            n,
            at,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let n = self.n;
        let ext = ExtensionState::initial(&self.spec.extension, n);
        let est = EstimatorState::initial(&self.spec.law, &self.spec.theta0);
        let mut parts: Vec<(&str, Vec<f64>)> = Vec::new();
        if let Some(p) = self.plant() {
            let o = ObserverState::initial(p);
            parts.extend([
                ("x", o.x),
                ("chi", o.chi),
                ("P", o.p),
                ("Omega", o.omega.into_vec()),
                ("Phi_K", o.phi_k.into_vec()),
                ("delta_f", o.delta_f),
            ]);
        }
        // det of the initial effective matrix is 0 for both schemes
        let delta0 = crate::smallmat::det(&self.spec.extension.effective_matrix(&ext.phi))
            .expect("square");
        parts.extend([
            ("Y", ext.y),
            ("Phi", ext.phi.into_vec()),
            ("W", ext.w),
            ("theta_hat", est.theta_hat),
            ("delta_jacobi", vec![delta0]),
        ]);
        if let Some(k) = est.kappa_hat {
            parts.push(("kappa_hat", vec![k]));
        }
        self.layout.pack(&parts).expect("initial state matches layout")
    }

    fn plant(&self) -> Option<&PlantSpec> {
        match &self.spec.problem {
            Problem::Plant(p) => Some(p),
            Problem::Regression(_) => None,
        }
    }

    fn observer(&self, s: &[f64]) -> ObserverState {
        let [x, chi, p, omega, phi_k, delta_f] = self.at.plant.as_ref().expect("plant blocks");
        ObserverState {
            x: s[x.range()].to_vec(),
            chi: s[chi.range()].to_vec(),
            p: s[p.range()].to_vec(),
            omega: mat(omega, s),
            phi_k: mat(phi_k, s),
            delta_f: s[delta_f.range()].to_vec(),
        }
    }

    /// Observer filter states held in `s`; `None` for regression scenarios.
    pub fn observer_state(&self, s: &[f64]) -> Option<ObserverState> {
        self.at.plant.as_ref().map(|_| self.observer(s))
    }

    /// Signals at one instant, computed with the reference (allocating)
    /// module functions rather than the fused kernel of `rhs`.
    fn snapshot(&self, t: f64, s: &[f64]) -> Result<Snapshot> {
        let (regressor, y, w, obs) = match &self.spec.problem {
            Problem::Regression(r) => {
                (r.eval_regressor(t), r.eval_output(t), r.eval_disturbance(t), None)
            }
            Problem::Plant(p) => {
                let o = self.observer(s);
                let yv = p.output(&o.x, t);
                let reg = build_regression(p, &o, &yv, &p.eval_delta(t));
                (reg.phi_row, reg.z, reg.w, Some(o))
            }
        };
        let (_, _, mixed, est) = self.estimation(t, s, &regressor, y, w)?;
        Ok(Snapshot {
            regressor,
            mixed,
            est,
            obs,
        })
    }

    /// Extension, mixing and estimator state given this instant's scalar
    /// regression `y = regressor^T theta + w`.
    fn estimation(
        &self,
        t: f64,
        s: &[f64],
        regressor: &[f64],
        y: f64,
        w: f64,
    ) -> Result<(ExtensionState, ExtensionState, MixedSignals, EstimatorState)> {
        let at = &self.at;
        let ext = ExtensionState {
            y: s[at.y.clone()].to_vec(),
            phi: mat(&at.phi, s),
            w: s[at.w.clone()].to_vec(),
        };
        let ext_dot = self.spec.extension.rhs(&ext, regressor, y, w)?;
        let mixed = mix_with_rate(&ext, &ext_dot, &self.spec.extension)?;
        let est = EstimatorState {
            theta_hat: s[at.theta_hat.clone()].to_vec(),
            kappa_hat: at.kappa_hat.map(|i| s[i]),
            t,
        };
        Ok((ext, ext_dot, mixed, est))
    }

    /// Canonical trace columns for this run.
    pub fn columns(&self) -> Vec<String> {
        let n = self.n;
        let idx = |p: &'static str, k: usize| (1..=k).map(move |i| format!("{p}_{i}"));
        let mut c: Vec<String> = vec!["t".into(), "delta_jacobi".into()];
        c.extend(idx("theta_hat", n));
        c.extend(idx("theta_tilde", n));
        c.extend(idx("scalY", n));
        c.extend(idx("scalW", n));
        c.extend(["kappa_hat", "kappa_tilde", "delta", "delta_dot"].map(String::from));
        c.extend(idx("phi", n));
        c.extend(["ineq_lhs", "ineq_rhs"].map(String::from));
        if let Some(p) = self.plant() {
            let nx = p.state_dim();
            c.extend(idx("x", nx));
            c.extend(idx("xhat", nx));
            c.extend(
                ["xtilde_norm", "e_identity_residual", "regression_residual"].map(String::from),
            );
        }
        c
    }

    /// One trace row (see [`Self::columns`]).
    pub fn record(&self, t: f64, s: &[f64]) -> Result<Vec<f64>> {
        let snap = self.snapshot(t, s)?;
        let theta = self.spec.problem.theta();
        let m = &snap.mixed;
        let mut row = vec![t, s[self.at.delta_jacobi]];
        row.extend(&snap.est.theta_hat);
        row.extend(snap.est.theta_hat.iter().zip(theta).map(|(a, b)| a - b));
        row.extend(&m.scal_y);
        row.extend(&m.scal_w);
        match (&self.spec.law, snap.est.kappa_hat) {
            (LawSpec::Averaging { gamma, .. }, Some(k)) => {
                let kt = if m.delta > 0.0 { k - 1.0 / m.delta } else { f64::NAN };
                row.extend([k, kt, m.delta, m.delta_dot]);
                row.extend(&snap.regressor);
                row.push(inequality_lhs(*gamma, m.delta, m.delta_dot, k));
            }
            _ => {
                row.extend([f64::NAN, f64::NAN, m.delta, m.delta_dot]);
                row.extend(&snap.regressor);
                row.push(f64::NAN);
            }
        }
        row.push(match (self.spec.law.has_kappa(), self.spec.eta_reference) {
            (true, Some(eta)) => eta * m.delta,
            _ => f64::NAN,
        });
        if let (Some(p), Some(o)) = (self.plant(), &snap.obs) {
            let xhat = reconstruct_state(o, &snap.est.theta_hat);
            let xt: Vec<f64> = xhat.iter().zip(&o.x).map(|(a, b)| a - b).collect();
            // e = chi + P + Omega theta - x should equal Phi_K e0 + delta_f
            let e = reconstruct_state(o, theta);
            let pred = o.phi_k.mul_vec(&p.e0());
            let e_res = (0..e.len())
                .map(|i| (e[i] - o.x[i] - pred[i] - o.delta_f[i]).abs())
                .fold(0.0, f64::max);
            let yv = p.output(&o.x, t);
            let reg = build_regression(p, o, &yv, &p.eval_delta(t));
            let r_res = (reg.z - crate::smallmat::dot(&reg.phi_row, theta) - reg.w).abs();
            row.extend(&o.x);
            row.extend(&xhat);
            row.extend([norm2(&xt), e_res, r_res]);
        }
        Ok(row)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            t0: 0.0,
            horizon: self.spec.horizon,
            step: self.spec.step,
            sample_every: self.spec.sample_every,
        }
    }

    /// Integrates the full horizon, sampling trace rows.
    pub fn run(&self) -> Result<(Trace, Option<Error>)> {
        let out: Outcome<Vec<f64>> =
            integrate(self, self.initial_state(), &self.schedule(), |t, s| self.record(t, s))?;
        let trace = Trace {
            columns: self.columns(),
            rows: out.records,
        };
        Ok((trace, out.failure))
    }
}

impl OdeSystem for DremSystem {
    fn layout(&self) -> &StateLayout {
        &self.layout
    }

    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<()> {
        let at = &self.at;
        let mut phi_row = SmallVec::<[f64; 8]>::from_elem(0.0, self.n);
        let (y, w) = match (&self.spec.problem, &at.plant) {
            (Problem::Regression(r), _) => {
                phi_row.iter_mut().zip(&r.regressor).for_each(|(p, e)| *p = e.eval(t));
                (r.eval_output(t), r.eval_disturbance(t))
            }
            (Problem::Plant(p), Some(b)) => {
                let blocks = PlantBlocks {
                    x: &s[b[0].range()],
                    chi: &s[b[1].range()],
                    p: &s[b[2].range()],
                    omega: &s[b[3].range()],
                    phi_k: &s[b[4].range()],
                    delta_f: &s[b[5].range()],
                };
                // plant blocks are contiguous from offset 0, in layout order
                let (x, rest) = ds.split_at_mut(b[0].len());
                let (chi, rest) = rest.split_at_mut(b[1].len());
                let (pp, rest) = rest.split_at_mut(b[2].len());
                let (omega, rest) = rest.split_at_mut(b[3].len());
                let (phi_k, rest) = rest.split_at_mut(b[4].len());
                let delta_f = &mut rest[..b[5].len()];
                let rates = PlantRates { x, chi, p: pp, omega, phi_k, delta_f };
                fused_rates(p, t, &blocks, rates, &mut phi_row)
            }
            (Problem::Plant(_), None) => unreachable!("plant layout resolved in new()"),
        };
        let (_, ext_dot, mixed, est) = self.estimation(t, s, &phi_row, y, w)?;
        ds[at.y.clone()].copy_from_slice(&ext_dot.y);
        ds[at.phi.range()].copy_from_slice(ext_dot.phi.as_slice());
        ds[at.w.clone()].copy_from_slice(&ext_dot.w);
        let r = law_rhs(&self.spec.law, &est, &mixed);
        ds[at.theta_hat.clone()].copy_from_slice(&r.theta_hat);
        if let (Some(i), Some(k)) = (at.kappa_hat, r.kappa_hat) {
            ds[i] = k;
        }
        ds[at.delta_jacobi] = mixed.delta_dot;
        Ok(())
    }
}
