//! State reconstruction for `x' = A x + phi(y, u) + G(y, u) theta`,
//! `y = C x + delta(t)`, with unknown constant `theta`.
//!
//! The filters
//!
//! ```text
//! chi'   = A_K chi + K y          P'     = A_K P + phi(y, u)
//! Omega' = A_K Omega + G(y, u)    Phi_K' = A_K Phi_K,  A_K = A - K C
//! ```
//!
//! turn the plant into the scalar regression `z = phi_row theta + w`, and the
//! state estimate is `x_hat = chi + P + Omega theta_hat`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::signals::{finite_all, SignalExpr};
use crate::smallmat::{solve_lyapunov, sym_eigenvalues, Mat};

/// Expression over the measured output `y` and the input `u`
/// (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapExpr {
    Constant(f64),
    Y(usize),
    U(usize),
    Sum(Vec<MapExpr>),
    Product(Vec<MapExpr>),
    Scale { factor: f64, expr: Box<MapExpr> },
}

impl MapExpr {
    pub fn eval(&self, y: &[f64], u: &[f64]) -> f64 {
        match self {
            MapExpr::Constant(c) => *c,
            MapExpr::Y(i) => y[i - 1],
            MapExpr::U(i) => u[i - 1],
            MapExpr::Sum(terms) => terms.iter().map(|e| e.eval(y, u)).sum(),
            MapExpr::Product(terms) => terms.iter().map(|e| e.eval(y, u)).product(),
            MapExpr::Scale { factor, expr } => factor * expr.eval(y, u),
        }
    }

    fn validate(&self, field: &str, p: usize, m: usize) -> Result<()> {
        match self {
            MapExpr::Constant(c) if !c.is_finite() => Err(Error::invalid(field, "must be finite")),
            MapExpr::Y(i) if *i == 0 || *i > p => {
                Err(Error::invalid(field, format!("y index {i} outside 1..={p}")))
            }
            MapExpr::U(i) if *i == 0 || *i > m => {
                Err(Error::invalid(field, format!("u index {i} outside 1..={m}")))
            }
            MapExpr::Sum(ts) | MapExpr::Product(ts) => {
                ts.iter().try_for_each(|e| e.validate(field, p, m))
            }
            MapExpr::Scale { factor, expr } => {
                if !factor.is_finite() {
                    return Err(Error::invalid(field, "factor must be finite"));
                }
                expr.validate(field, p, m)
            }
            _ => Ok(()),
        }
    }
}

/// Plant section of a scenario file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub a: Mat,
    pub c: Mat,
    pub k: Mat,
    pub theta: Vec<f64>,
    /// `phi(y, u)`, one expression per state.
    pub phi: Vec<MapExpr>,
    /// `G(y, u)`, `n` rows of `q` expressions.
    pub g: Vec<Vec<MapExpr>>,
    /// Output disturbance, one expression per output.
    pub delta: Vec<SignalExpr>,
    #[serde(default)]
    pub u: Vec<SignalExpr>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub chi0: Option<Vec<f64>>,
}

/// Validated plant with `A - K C` known to be Hurwitz.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub a: Mat,
    pub c: Mat,
    pub k: Mat,
    pub a_k: Mat,
    pub phi_map: Vec<MapExpr>,
    pub g_map: Vec<Vec<MapExpr>>,
    pub theta: Vec<f64>,
    pub delta: Vec<SignalExpr>,
    pub u: Vec<SignalExpr>,
    pub x0: Vec<f64>,
    pub chi0: Vec<f64>,
}

impl TryFrom<PlantFile> for PlantSpec {
    type Error = Error;

    fn try_from(f: PlantFile) -> Result<Self> {
        let n = f.a.rows();
        let p = f.c.rows();
        let q = f.theta.len();
        let m = f.u.len();
        let shape = |field: &str, ok: bool, want: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("expected {want}")))
            }
        };
        shape("plant.a", f.a.is_square() && n > 0, "a non-empty square matrix".into())?;
        shape("plant.c", f.c.cols() == n && p > 0, format!("{p}x{n}"))?;
        shape("plant.k", f.k.rows() == n && f.k.cols() == p, format!("{n}x{p}"))?;
        shape("plant.theta", q > 0, "at least one parameter".into())?;
        shape("plant.phi", f.phi.len() == n, format!("{n} entries"))?;
        shape(
            "plant.g",
            f.g.len() == n && f.g.iter().all(|r| r.len() == q),
            format!("{n} rows of {q} entries"),
        )?;
        shape("plant.delta", f.delta.len() == p, format!("{p} entries"))?;
        shape("plant.x0", f.x0.len() == n, format!("{n} entries"))?;
        let chi0 = f.chi0.unwrap_or_else(|| vec![0.0; n]);
        shape("plant.chi0", chi0.len() == n, format!("{n} entries"))?;
        for (name, mat) in [("plant.a", &f.a), ("plant.c", &f.c), ("plant.k", &f.k)] {
            if !mat.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        finite_all("plant.theta", &f.theta)?;
        finite_all("plant.x0", &f.x0)?;
        finite_all("plant.chi0", &chi0)?;
        for (i, e) in f.phi.iter().enumerate() {
            e.validate(&format!("plant.phi[{i}]"), p, m)?;
        }
        for (i, row) in f.g.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                e.validate(&format!("plant.g[{i}][{j}]"), p, m)?;
            }
        }
        for (i, e) in f.delta.iter().enumerate() {
            e.validate(&format!("plant.delta[{i}]"))?;
        }
        for (i, e) in f.u.iter().enumerate() {
            e.validate(&format!("plant.u[{i}]"))?;
        }
        let a_k = f.a.sub(&f.k.mul(&f.c));
        solve_lyapunov(&a_k, &Mat::identity(n)).map_err(|e| {
            Error::invalid("plant.k", format!("A - K C must be Hurwitz ({e})"))
        })?;
        Ok(PlantSpec {
            a: f.a,
            c: f.c,
            k: f.k,
            a_k,
            phi_map: f.phi,
            g_map: f.g,
            theta: f.theta,
            delta: f.delta,
            u: f.u,
            x0: f.x0,
            chi0,
        })
    }
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn param_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn eval_delta(&self, t: f64) -> Vec<f64> {
        self.delta.iter().map(|e| e.eval(t)).collect()
    }

    pub fn eval_input(&self, t: f64) -> Vec<f64> {
        self.u.iter().map(|e| e.eval(t)).collect()
    }

    /// `y = C x + delta(t)`.
    pub fn output(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.c
            .mul_vec(x)
            .into_iter()
            .zip(self.eval_delta(t))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn phi(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        self.phi_map.iter().map(|e| e.eval(y, u)).collect()
    }

    pub fn g(&self, y: &[f64], u: &[f64]) -> Mat {
        let n = self.state_dim();
        let q = self.param_dim();
        let mut g = Mat::zeros(n, q);
        for (i, row) in self.g_map.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                g[(i, j)] = e.eval(y, u);
            }
        }
        g
    }

    /// Initial observer error `chi0 - x0`.
    pub fn e0(&self) -> Vec<f64> {
        self.chi0.iter().zip(&self.x0).map(|(c, x)| c - x).collect()
    }

    /// Norm bound on `delta(t)` implied by its expressions.
    pub fn delta_bound(&self) -> f64 {
        self.delta
            .iter()
            .map(|e| e.abs_bound().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Plant state plus filter states. `x` and `delta_f` are simulator ground
/// truth; an implementable observer carries only the other four.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub x: Vec<f64>,
    pub chi: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Mat,
    pub phi_k: Mat,
    pub delta_f: Vec<f64>,
}

impl ObserverState {
    pub fn initial(spec: &PlantSpec) -> Self {
        let n = spec.state_dim();
        ObserverState {
            x: spec.x0.clone(),
            chi: spec.chi0.clone(),
            p: vec![0.0; n],
            omega: Mat::zeros(n, spec.param_dim()),
            phi_k: Mat::identity(n),
            delta_f: vec![0.0; n],
        }
    }
}

/// Derivatives of the five filter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRates {
    pub chi: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Mat,
    pub phi_k: Mat,
    pub delta_f: Vec<f64>,
}

fn add(a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn plant_rhs(spec: &PlantSpec, x: &[f64], t: f64) -> Vec<f64> {
    plant_rate(spec, x, &spec.output(x, t), &spec.eval_input(t))
}

/// [`plant_rhs`] with `y` and `u` already evaluated.
pub(crate) fn plant_rate(spec: &PlantSpec, x: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    let ax = spec.a.mul_vec(x);
    let g_theta = spec.g(y, u).mul_vec(&spec.theta);
    add(add(ax, &spec.phi(y, u)), &g_theta)
}

/// `delta` is the true output disturbance; it only drives `delta_f`.
pub fn filters_rhs(
    spec: &PlantSpec,
    obs: &ObserverState,
    y: &[f64],
    u: &[f64],
    delta: &[f64],
) -> FilterRates {
    let ak = &spec.a_k;
    FilterRates {
        chi: add(ak.mul_vec(&obs.chi), &spec.k.mul_vec(y)),
        p: add(ak.mul_vec(&obs.p), &spec.phi(y, u)),
        omega: ak.mul(&obs.omega).add(&spec.g(y, u)),
        phi_k: ak.mul(&obs.phi_k),
        delta_f: add(ak.mul_vec(&obs.delta_f), &spec.k.mul_vec(delta)),
    }
}

/// One sample of `z = phi_row theta + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub z: f64,
    pub phi_row: Vec<f64>,
    /// Bookkeeping: built from the true `e0` and `delta_f`.
    pub w: f64,
}

/// Row sum `L v` with `L = [1 ... 1]`.
fn l_sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

pub fn build_regression(
    spec: &PlantSpec,
    obs: &ObserverState,
    y: &[f64],
    delta: &[f64],
) -> RegressionSample {
    let c = &spec.c;
    let cx: Vec<f64> = c
        .mul_vec(&obs.chi)
        .iter()
        .zip(c.mul_vec(&obs.p))
        .map(|(a, b)| a + b)
        .collect();
    let z = l_sum(y) - l_sum(&cx);
    let c_omega = c.mul(&obs.omega);
    let phi_row = (0..c_omega.cols())
        .map(|j| (0..c_omega.rows()).map(|i| c_omega[(i, j)]).sum())
        .collect();
    let w = -l_sum(&c.mul_vec(&obs.phi_k.mul_vec(&spec.e0()))) - l_sum(&c.mul_vec(&obs.delta_f))
        + l_sum(delta);
    RegressionSample { z, phi_row, w }
}

/// `x_hat = chi + P + Omega theta_hat`.
pub fn reconstruct_state(obs: &ObserverState, theta_hat: &[f64]) -> Vec<f64> {
    add(add(obs.chi.clone(), &obs.p), &obs.omega.mul_vec(theta_hat))
}

/// Steady-state bound on the reconstruction error,
/// `||Pi K|| delta_max sqrt(lambda_max(Pi) / (c (lambda_min(Q) - c) lambda_min(Pi)))`
/// with `A_K^T Pi + Pi A_K = -Q`.
pub fn epsilon_x_bound(spec: &PlantSpec, delta_max: f64, q: &Mat, c: f64) -> Result<f64> {
    if !(delta_max >= 0.0) {
        return Err(Error::Parameter("delta_max must be >= 0".into()));
    }
    let q_min = sym_eigenvalues(q)?[0];
    if !(c > 0.0 && c < q_min) {
        return Err(Error::Parameter(format!(
            "c must lie in (0, lambda_min(Q)) = (0, {q_min}), got {c}"
        )));
    }
    let pi = solve_lyapunov(&spec.a_k, q)?;
    let ev = sym_eigenvalues(&pi)?;
    let (p_min, p_max) = (ev[0], ev[ev.len() - 1]);
    let gain = pi.mul(&spec.k).spectral_norm();
    Ok(gain * delta_max * (p_max / (c * (q_min - c) * p_min)).sqrt())
}

type Small = SmallVec<[f64; 8]>;

/// `out = a v` for a row-major `rows x cols` slice.
fn gemv(a: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(a.chunks_exact(cols)) {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

/// `out = a b` with `a` square `n x n` and `b` `n x k`, both row-major.
fn gemm(a: &[f64], n: usize, b: &[f64], k: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..n {
        for l in 0..n {
            let x = a[i * n + l];
            if x == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += x * b[l * k + j];
            }
        }
    }
}

/// Observer blocks of the flat simulator state, row-major.
pub(crate) struct PlantBlocks<'a> {
    pub x: &'a [f64],
    pub chi: &'a [f64],
    pub p: &'a [f64],
    pub omega: &'a [f64],
    pub phi_k: &'a [f64],
    pub delta_f: &'a [f64],
}

pub(crate) struct PlantRates<'a> {
    pub x: &'a mut [f64],
    pub chi: &'a mut [f64],
    pub p: &'a mut [f64],
    pub omega: &'a mut [f64],
    pub phi_k: &'a mut [f64],
    pub delta_f: &'a mut [f64],
}

/// [`plant_rhs`], [`filters_rhs`] and [`build_regression`] in one pass
/// without heap allocation, for the simulator's inner loop. Writes the rates
/// and `phi_row`, returns `(z, w)`.
pub(crate) fn fused_rates(
    spec: &PlantSpec,
    t: f64,
    s: &PlantBlocks<'_>,
    out: PlantRates<'_>,
    phi_row: &mut [f64],
) -> (f64, f64) {
    let nx = spec.state_dim();
    let np = spec.output_dim();
    let q = spec.param_dim();
    let (c, k, a_k) = (spec.c.as_slice(), spec.k.as_slice(), spec.a_k.as_slice());
    let delta: Small = spec.delta.iter().map(|e| e.eval(t)).collect();
    let u: Small = spec.u.iter().map(|e| e.eval(t)).collect();
    let mut y = Small::from_elem(0.0, np);
    gemv(c, nx, s.x, &mut y);
    y.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
    let phi: Small = spec.phi_map.iter().map(|e| e.eval(&y, &u)).collect();
    let g: Small = spec.g_map.iter().flatten().map(|e| e.eval(&y, &u)).collect();

    let mut tmp = Small::from_elem(0.0, nx);
    // x' = A x + phi + G theta
    gemv(spec.a.as_slice(), nx, s.x, out.x);
    gemv(&g, q, &spec.theta, &mut tmp);
    for i in 0..nx {
        out.x[i] = out.x[i] + phi[i] + tmp[i];
    }
    // chi' = A_K chi + K y, delta_f' = A_K delta_f + K delta
    gemv(a_k, nx, s.chi, out.chi);
    gemv(k, np, &y, &mut tmp);
    out.chi.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    gemv(a_k, nx, s.delta_f, out.delta_f);
    gemv(k, np, &delta, &mut tmp);
    out.delta_f.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    // P' = A_K P + phi
    gemv(a_k, nx, s.p, out.p);
    out.p.iter_mut().zip(&phi).for_each(|(a, b)| *a += b);
    // Omega' = A_K Omega + G, Phi_K' = A_K Phi_K
    gemm(a_k, nx, s.omega, q, out.omega);
    out.omega.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    gemm(a_k, nx, s.phi_k, nx, out.phi_k);

    // regression, with L = [1 ... 1]
    let mut cv = Small::from_elem(0.0, np);
    let mut z = y.iter().sum::<f64>();
    gemv(c, nx, s.chi, &mut cv);
    let mut cp = Small::from_elem(0.0, np);
    gemv(c, nx, s.p, &mut cp);
    z -= cv.iter().zip(&cp).map(|(a, b)| a + b).sum::<f64>();
    for (j, r) in phi_row.iter_mut().enumerate() {
        *r = (0..np)
            .map(|i| (0..nx).map(|l| c[i * nx + l] * s.omega[l * q + j]).sum::<f64>())
            .sum();
    }
    let e0: Small = spec.chi0.iter().zip(&spec.x0).map(|(a, b)| a - b).collect();
    gemv(s.phi_k, nx, &e0, &mut tmp);
    gemv(c, nx, &tmp, &mut cv);
    let mut w = -cv.iter().sum::<f64>();
    gemv(c, nx, s.delta_f, &mut cv);
    w -= cv.iter().sum::<f64>();
    w += delta.iter().sum::<f64>();
    (z, w)
}
