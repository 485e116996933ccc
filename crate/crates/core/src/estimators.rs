//! Identification laws driven by the mixed scalar regressions.
//!
//! Both laws read only `scal_y`, `delta` and `delta_dot` of [`MixedSignals`];
//! the true parameters and the mixed disturbance never reach them.

use crate::error::{Error, Result};
use crate::mixing::MixedSignals;

#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    /// `theta_hat' = -gamma delta (delta theta_hat - scalY)`.
    Gradient { gamma: f64 },
    /// Averaging law: `theta_hat_i' = -(theta_hat_i - kappa_hat scalY_i) / (t + k_i)`,
    /// with `kappa_hat` tracking `1 / delta`.
    Averaging { gamma: f64, k: Vec<f64>, kappa0: f64 },
}

impl LawSpec {
    pub fn gamma(&self) -> f64 {
        match self {
            LawSpec::Gradient { gamma } | LawSpec::Averaging { gamma, .. } => *gamma,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let gamma = self.gamma();
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must be > 0"));
        }
        if let LawSpec::Averaging { k, kappa0, .. } = self {
            if k.len() != n {
                return Err(Error::invalid(
                    "averaging.k",
                    format!("has {} entries, expected {n}", k.len()),
                ));
            }
            if let Some(i) = k.iter().position(|ki| !(*ki > 0.0 && ki.is_finite())) {
                return Err(Error::invalid(format!("averaging.k[{i}]"), "k_i must be > 0"));
            }
            if !kappa0.is_finite() {
                return Err(Error::invalid("averaging.kappa0", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn has_kappa(&self) -> bool {
        matches!(self, LawSpec::Averaging { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: Vec<f64>,
    /// Present for the averaging law only.
    pub kappa_hat: Option<f64>,
    /// Time elapsed since the start of estimation.
    pub t: f64,
}

impl EstimatorState {
    pub fn initial(law: &LawSpec, theta0: &[f64]) -> Self {
        EstimatorState {
            theta_hat: theta0.to_vec(),
            kappa_hat: match law {
                LawSpec::Averaging { kappa0, .. } => Some(*kappa0),
                LawSpec::Gradient { .. } => None,
            },
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRate {
    pub theta_hat: Vec<f64>,
    pub kappa_hat: Option<f64>,
}

pub fn gradient_rhs(state: &EstimatorState, mixed: &MixedSignals, gamma: f64) -> EstimatorRate {
    let d = mixed.delta;
    EstimatorRate {
        theta_hat: state
            .theta_hat
            .iter()
            .zip(&mixed.scal_y)
            .map(|(th, yy)| -gamma * d * (d * th - yy))
            .collect(),
        kappa_hat: None,
    }
}

/// `kappa_hat' = -gamma delta (delta kappa_hat - 1) - delta_dot kappa_hat^2`.
pub fn kappa_rhs(kappa_hat: f64, mixed: &MixedSignals, gamma: f64) -> f64 {
    let d = mixed.delta;
    -gamma * d * (d * kappa_hat - 1.0) - mixed.delta_dot * kappa_hat * kappa_hat
}

/// Averaging law with gains `1 / F_i`, `F_i = t + k_i`.
///
/// Panics if `state` has no `kappa_hat`.
pub fn averaging_rhs(
    state: &EstimatorState,
    mixed: &MixedSignals,
    gamma: f64,
    k: &[f64],
) -> EstimatorRate {
    let kappa = state
        .kappa_hat
        .expect("averaging law state carries kappa_hat");
    let theta_hat = state
        .theta_hat
        .iter()
        .zip(&mixed.scal_y)
        .zip(k)
        .map(|((th, yy), ki)| -(th - kappa * yy) / (state.t + ki))
        .collect();
    EstimatorRate {
        theta_hat,
        kappa_hat: Some(kappa_rhs(kappa, mixed, gamma)),
    }
}

/// Dispatches to the law's right-hand side.
pub fn law_rhs(law: &LawSpec, state: &EstimatorState, mixed: &MixedSignals) -> EstimatorRate {
    match law {
        LawSpec::Gradient { gamma } => gradient_rhs(state, mixed, *gamma),
        LawSpec::Averaging { gamma, k, .. } => averaging_rhs(state, mixed, *gamma, k),
    }
}

/// Left side of the verifiable inequality,
/// `gamma delta^3 + delta delta_dot kappa_hat + delta_dot`.
pub fn inequality_lhs(gamma: f64, delta: f64, delta_dot: f64, kappa_hat: f64) -> f64 {
    gamma * delta.powi(3) + delta * delta_dot * kappa_hat + delta_dot
}
