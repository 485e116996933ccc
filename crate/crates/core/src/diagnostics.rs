//! Post-hoc checks on sampled traces: excitation levels, detection of the
//! time after which `delta` stays positive, the verifiable inequality of the
//! averaging law, and the disturbance-averaging conditions.
//!
//! Everything here works on uniformly sampled columns; quadrature is
//! trapezoidal on that grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trace;
use crate::signals::DiagnosticsParams;
use crate::smallmat::{sym_eigenvalues, Mat};

const TIME_EPS: f64 = 1e-9;

fn check_samples(times: &[f64], phi: &[Vec<f64>]) -> Result<usize> {
    if times.len() != phi.len() {
        return Err(Error::dim("excitation", format!("{} times vs {} regressor samples", times.len(), phi.len())));
    }
    let n = phi.first().map_or(0, Vec::len);
    if phi.iter().any(|p| p.len() != n) {
        return Err(Error::dim("excitation", "ragged regressor samples"));
    }
    Ok(n)
}

/// Trapezoid contribution of `[i, i + 1]` to the Gram integral, packed
/// row-major.
fn gram_increment(times: &[f64], phi: &[Vec<f64>], i: usize, out: &mut [f64]) {
    let n = phi[i].len();
    let h = 0.5 * (times[i + 1] - times[i]);
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = h * (phi[i][r] * phi[i][c] + phi[i + 1][r] * phi[i + 1][c]);
        }
    }
}

fn lambda_min(n: usize, gram: &[f64]) -> Result<f64> {
    let m = Mat::from_vec(n, n, gram.to_vec())?;
    // clamp round-off below zero: a Gram matrix is PSD
    Ok(sym_eigenvalues(&m)?[0].max(0.0))
}

/// Smallest eigenvalue of `int phi phi^T` over `window`: the largest `alpha`
/// with `int phi phi^T >= alpha I` there.
pub fn fe_level(times: &[f64], phi: &[Vec<f64>], window: (f64, f64)) -> Result<f64> {
    let n = check_samples(times, phi)?;
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.0 - TIME_EPS && times[i] <= window.1 + TIME_EPS)
        .collect();
    if idx.len() < 2 || window.1 <= window.0 {
        return Err(Error::Diagnostics(format!(
            "window [{}, {}] holds {} samples, need at least 2",
            window.0,
            window.1,
            idx.len()
        )));
    }
    let mut gram = vec![0.0; n * n];
    let mut inc = vec![0.0; n * n];
    for &i in &idx[..idx.len() - 1] {
        gram_increment(times, phi, i, &mut inc);
        gram.iter_mut().zip(&inc).for_each(|(g, d)| *g += d);
    }
    lambda_min(n, &gram)
}

/// Minimum of [`fe_level`] over all sliding windows of length `window_len`
/// (on the sample grid).
pub fn pe_level(times: &[f64], phi: &[Vec<f64>], window_len: f64) -> Result<f64> {
    let n = check_samples(times, phi)?;
    if times.len() < 2 {
        return Err(Error::Diagnostics("need at least 2 samples".into()));
    }
    let dt = times[1] - times[0];
    let m = (window_len / dt).round() as usize;
    if m == 0 || m >= times.len() {
        return Err(Error::Diagnostics(format!(
            "trace of length {} s is not longer than the window {window_len} s",
            times[times.len() - 1] - times[0]
        )));
    }
    // prefix[k] = Gram integral over [t_0, t_k]
    let nn = n * n;
    let mut prefix = vec![0.0; times.len() * nn];
    let mut inc = vec![0.0; nn];
    for i in 0..times.len() - 1 {
        gram_increment(times, phi, i, &mut inc);
        for j in 0..nn {
            prefix[(i + 1) * nn + j] = prefix[i * nn + j] + inc[j];
        }
    }
    let mut best = f64::INFINITY;
    let mut win = vec![0.0; nn];
    for start in 0..times.len() - m {
        let end = start + m;
        for j in 0..nn {
            win[j] = prefix[end * nn + j] - prefix[start * nn + j];
        }
        best = best.min(lambda_min(n, &win)?);
    }
    Ok(best)
}

/// Trailing window `[len - ceil(share len), len)` as a start index.
fn terminal_start(len: usize, share: f64) -> usize {
    let k = ((len as f64) * share).ceil() as usize;
    len - k.clamp(1, len)
}

/// Maximum of `values` over the trailing `share` of the samples.
pub fn terminal_max(values: &[f64], share: f64) -> f64 {
    values[terminal_start(values.len(), share)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t_detect: f64,
    pub index: usize,
    /// `detect_fraction` times the terminal-window minimum of delta.
    pub threshold: f64,
    /// Minimum of delta over `t >= t_detect`.
    pub delta_lb: f64,
    /// Maximum of delta over the whole trace.
    pub delta_ub: f64,
}

/// Earliest sample after which `delta` never drops below `detect_fraction`
/// of its terminal-window minimum.
pub fn detect_excitation(times: &[f64], delta: &[f64], params: &DiagnosticsParams) -> Result<Detection> {
    if times.is_empty() || times.len() != delta.len() {
        return Err(Error::Diagnostics("empty or mismatched delta samples".into()));
    }
    let start = terminal_start(delta.len(), params.terminal_share);
    let term_min = delta[start..].iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = params.detect_fraction * term_min;
    if !(threshold > 0.0) {
        return Err(Error::Diagnostics(format!(
            "delta is not positive over the terminal window (min {term_min:e}); no excitation detected"
        )));
    }
    let index = match delta.iter().rposition(|d| !(*d >= threshold)) {
        Some(i) => i + 1,
        None => 0,
    };
    let delta_lb = delta[index..].iter().copied().fold(f64::INFINITY, f64::min);
    let delta_ub = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Detection {
        t_detect: times[index],
        index,
        threshold,
        delta_lb,
        delta_ub,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum InequalityOutcome {
    /// `eta_max = inf (lhs / delta)` over `t >= T`, attained at `t_min`.
    /// The inequality holds with some `eta > 0` iff `eta_max > 0`.
    Holds { eta_max: f64, t_min: f64 },
    /// `delta(t) <= 0` (or a missing sample) at `t >= T`.
    Violated { t: f64 },
}

impl InequalityOutcome {
    /// `eta_max` if positive, else 0.
    pub fn eta(&self) -> f64 {
        match *self {
            InequalityOutcome::Holds { eta_max, .. } if eta_max > 0.0 => eta_max,
            _ => 0.0,
        }
    }
}

/// Largest `eta` with `gamma delta^3 + delta delta_dot kappa_hat + delta_dot >= eta delta`
/// for all samples with `t >= t_from`. `lhs` holds the left side.
pub fn check_inequality(times: &[f64], lhs: &[f64], delta: &[f64], t_from: f64) -> Result<InequalityOutcome> {
    if times.len() != lhs.len() || times.len() != delta.len() {
        return Err(Error::dim("check_inequality", "column lengths differ"));
    }
    let mut eta = f64::INFINITY;
    let mut t_min = f64::NAN;
    let mut any = false;
    for i in 0..times.len() {
        if times[i] < t_from - TIME_EPS {
            continue;
        }
        any = true;
        if !(delta[i] > 0.0) || !lhs[i].is_finite() {
            return Ok(InequalityOutcome::Violated { t: times[i] });
        }
        let r = lhs[i] / delta[i];
        if r < eta {
            eta = r;
            t_min = times[i];
        }
    }
    if !any {
        return Err(Error::Diagnostics(format!("no samples at or after t = {t_from}")));
    }
    Ok(InequalityOutcome::Holds { eta_max: eta, t_min })
}

/// Running `|int_from^t scalW / delta ds|` for one channel, one value per
/// sample with `t >= from`. `Err` carries the first time with `delta <= 0`.
pub fn c2_integral(times: &[f64], delta: &[f64], scal_w: &[f64], from: f64) -> std::result::Result<Vec<f64>, f64> {
    let start = times.iter().position(|t| *t >= from - TIME_EPS).unwrap_or(times.len());
    let mut out = Vec::with_capacity(times.len() - start);
    let mut acc = 0.0;
    for i in start..times.len() {
        if !(delta[i] > 0.0) {
            return Err(times[i]);
        }
        if i > start {
            let f0 = scal_w[i - 1] / delta[i - 1];
            let f1 = scal_w[i] / delta[i];
            acc += 0.5 * (times[i] - times[i - 1]) * (f0 + f1);
        }
        out.push(acc.abs());
    }
    Ok(out)
}

/// Supremum of a running C2 integral and whether it looks bounded: the
/// supremum over the whole run exceeds the first-half supremum by at most
/// half. A linearly growing integral roughly doubles and fails.
pub fn c2_summary(running: &[f64]) -> (f64, bool) {
    let sup = running.iter().copied().fold(0.0, f64::max);
    let half = running[..running.len().div_ceil(2)].iter().copied().fold(0.0, f64::max);
    (sup, sup <= 1.5 * half || sup < 1e-12)
}

/// Least-squares slope of `ln|v|` against `t` over `[from, to]`.
pub fn log_slope(times: &[f64], values: &[f64], from: f64, to: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= from - TIME_EPS && **t <= to + TIME_EPS && v.abs() > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Diagnostics(format!("fewer than 2 usable samples in [{from}, {to}]")));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Bound on `sup |theta_tilde_i|` for the averaging law:
/// `(|kappa_tilde| + 1/delta_lb) w_max + delta_ub |theta_i| |kappa_tilde|`.
pub fn s1_bound(kappa_tilde: f64, delta_lb: f64, delta_ub: f64, w_max: f64, theta_i: f64) -> f64 {
    (kappa_tilde.abs() + 1.0 / delta_lb) * w_max + delta_ub * theta_i.abs() * kappa_tilde.abs()
}

/// Asymptotic bound of the gradient law, `w_max delta_ub / delta_lb^2`.
pub fn p3_bound(w_max: f64, delta_ub: f64, delta_lb: f64) -> f64 {
    w_max * delta_ub / (delta_lb * delta_lb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    /// FE level of the regressor over the whole trace window.
    pub alpha: f64,
    pub window: (f64, f64),
    pub pe_window: f64,
    /// PE level over the whole trace (`None` if it is shorter than the window).
    pub pe_level: Option<f64>,
    /// PE level restricted to the terminal window.
    pub late_pe_level: Option<f64>,
    pub t_detect: f64,
    pub delta_lb: f64,
    pub delta_ub: f64,
    /// 0 when the inequality fails somewhere after `t_detect`; `None` for
    /// traces without `kappa_hat`.
    pub eta_max: Option<f64>,
    pub inequality: Option<InequalityOutcome>,
    /// `sup_t |scalW_i|` per channel.
    pub c1_bound: Vec<f64>,
    /// Maximum of `c1_bound`.
    pub w_max: f64,
    /// Supremum of the running C2 integral from `t_detect`, per channel.
    pub c2_sup: Vec<f64>,
    pub c2_bounded: Vec<bool>,
    pub kappa_tilde_at_detect: Option<f64>,
}

fn channels(trace: &Trace, prefix: &str) -> Vec<String> {
    (1..)
        .map(|i| format!("{prefix}_{i}"))
        .take_while(|c| trace.index(c).is_some())
        .collect()
}

/// Runs every diagnostic on a canonical trace.
pub fn excitation_report(trace: &Trace, params: &DiagnosticsParams) -> Result<ExcitationReport> {
    if trace.len() < 2 {
        return Err(Error::Diagnostics("trace needs at least 2 samples".into()));
    }
    let times = trace.times();
    let phi_cols: Vec<Vec<f64>> = channels(trace, "phi").iter().map(|c| trace.require(c)).collect::<Result<_>>()?;
    if phi_cols.is_empty() {
        return Err(Error::Diagnostics("trace has no phi_1 column".into()));
    }
    let phi: Vec<Vec<f64>> = (0..times.len()).map(|i| phi_cols.iter().map(|c| c[i]).collect()).collect();
    let window = (times[0], times[times.len() - 1]);
    let alpha = fe_level(&times, &phi, window)?;
    let pe = pe_level(&times, &phi, params.pe_window).ok();
    let late = terminal_start(times.len(), params.terminal_share);
    let late_pe = pe_level(&times[late..], &phi[late..], params.pe_window).ok();

    let delta = trace.require("delta")?;
    let det = detect_excitation(&times, &delta, params)?;

    let lhs = trace.require("ineq_lhs")?;
    let inequality = if lhs.iter().all(|v| v.is_nan()) {
        None
    } else {
        Some(check_inequality(&times, &lhs, &delta, det.t_detect)?)
    };

    let w_cols: Vec<Vec<f64>> = channels(trace, "scalW").iter().map(|c| trace.require(c)).collect::<Result<_>>()?;
    let c1_bound: Vec<f64> = w_cols.iter().map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect();
    let w_max = c1_bound.iter().copied().fold(0.0, f64::max);
    let mut c2_sup = Vec::new();
    let mut c2_bounded = Vec::new();
    for c in &w_cols {
        let running = c2_integral(&times, &delta, c, det.t_detect)
            .map_err(|t| Error::Diagnostics(format!("delta <= 0 at t = {t} after detection")))?;
        let (sup, ok) = c2_summary(&running);
        c2_sup.push(sup);
        c2_bounded.push(ok);
    }
    let kappa_tilde_at_detect = trace
        .column("kappa_tilde")
        .map(|k| k[det.index])
        .filter(|v| v.is_finite());
    Ok(ExcitationReport {
        alpha,
        window,
        pe_window: params.pe_window,
        pe_level: pe,
        late_pe_level: late_pe,
        t_detect: det.t_detect,
        delta_lb: det.delta_lb,
        delta_ub: det.delta_ub,
        eta_max: inequality.map(|o| o.eta()),
        inequality,
        c1_bound,
        w_max,
        c2_sup,
        c2_bounded,
        kappa_tilde_at_detect,
    })
}
