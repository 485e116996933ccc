//! Regressor extension: turns the scalar regression `y = phi^T theta + w`
//! into the matrix regression `Y = M theta + W`.
//!
//! Two schemes share one state shape `(Y, Phi, W)`:
//!
//! * Kreisselmeier filters, `M = Phi`, with exponential forgetting `l`;
//! * the decaying finite-excitation scheme, `Phi` a transition matrix started
//!   at the identity and `M = I - Phi`.
//!
//! `W` is bookkeeping only. It is driven by the true disturbance, which the
//! simulator knows and an estimator never sees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallmat::{dot, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtensionScheme {
    Kreisselmeier { l: f64 },
    FeDecay { mu: f64 },
}

impl ExtensionScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExtensionScheme::Kreisselmeier { l } if !(l > 0.0 && l.is_finite()) => {
                Err(Error::invalid("extension.l", "must be > 0"))
            }
            ExtensionScheme::FeDecay { mu } if !(mu > 0.0 && mu.is_finite()) => {
                Err(Error::invalid("extension.mu", "must be > 0"))
            }
            _ => Ok(()),
        }
    }

    /// Right-hand side of the selected scheme.
    pub fn rhs(
        &self,
        state: &ExtensionState,
        phi: &[f64],
        y: f64,
        w: f64,
    ) -> Result<ExtensionState> {
        match *self {
            ExtensionScheme::Kreisselmeier { l } => kreisselmeier_rhs(state, phi, y, w, l),
            ExtensionScheme::FeDecay { mu } => fe_extension_rhs(state, phi, y, w, mu),
        }
    }

    /// Matrix handed to the mixing step: `Phi` or `I - Phi`.
    pub fn effective_matrix(&self, phi: &Mat) -> Mat {
        match self {
            ExtensionScheme::Kreisselmeier { .. } => phi.clone(),
            ExtensionScheme::FeDecay { .. } => Mat::identity(phi.rows()).sub(phi),
        }
    }

    /// Time derivative of [`Self::effective_matrix`] given `d Phi / dt`.
    pub fn effective_rate(&self, phi_dot: &Mat) -> Mat {
        match self {
            ExtensionScheme::Kreisselmeier { .. } => phi_dot.clone(),
            ExtensionScheme::FeDecay { .. } => phi_dot.scale(-1.0),
        }
    }
}

/// `(Y, Phi, W)`; also used for its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionState {
    pub y: Vec<f64>,
    pub phi: Mat,
    pub w: Vec<f64>,
}

impl ExtensionState {
    /// Zero for Kreisselmeier, `Phi = I` for the decaying scheme.
    pub fn initial(scheme: &ExtensionScheme, n: usize) -> Self {
        let phi = match scheme {
            ExtensionScheme::Kreisselmeier { .. } => Mat::zeros(n, n),
            ExtensionScheme::FeDecay { .. } => Mat::identity(n),
        };
        ExtensionState {
            y: vec![0.0; n],
            phi,
            w: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }
}

fn check_dims(op: &'static str, state: &ExtensionState, phi: &[f64]) -> Result<()> {
    let n = state.y.len();
    if phi.len() != n || state.w.len() != n || state.phi.rows() != n || state.phi.cols() != n {
        return Err(Error::dim(
            op,
            format!(
                "regressor {} / Y {} / Phi {}x{} / W {}",
                phi.len(),
                n,
                state.phi.rows(),
                state.phi.cols(),
                state.w.len()
            ),
        ));
    }
    Ok(())
}

/// `(-lY + phi y, -l Phi + phi phi^T, -lW + phi w)`.
pub fn kreisselmeier_rhs(
    state: &ExtensionState,
    phi: &[f64],
    y: f64,
    w: f64,
    l: f64,
) -> Result<ExtensionState> {
    check_dims("kreisselmeier_rhs", state, phi)?;
    let y_dot = state.y.iter().zip(phi).map(|(yy, p)| -l * yy + p * y).collect();
    let phi_dot = state.phi.scale(-l).add(&Mat::outer(phi, phi));
    let w_dot = state.w.iter().zip(phi).map(|(ww, p)| -l * ww + p * w).collect();
    Ok(ExtensionState {
        y: y_dot,
        phi: phi_dot,
        w: w_dot,
    })
}

/// Decaying finite-excitation scheme:
/// `Y' = -mu phi (phi^T Y - y)`, `Phi' = -mu phi phi^T Phi`,
/// `W' = -mu phi phi^T W + mu phi w`.
///
/// The `mu` on the forcing of `W` is what makes `Y = (I - Phi) theta + W`
/// hold exactly along every trajectory.
pub fn fe_extension_rhs(
    state: &ExtensionState,
    phi: &[f64],
    y: f64,
    w: f64,
    mu: f64,
) -> Result<ExtensionState> {
    check_dims("fe_extension_rhs", state, phi)?;
    let innov = dot(phi, &state.y) - y;
    let y_dot = phi.iter().map(|p| -mu * p * innov).collect();
    // phi phi^T Phi = phi (Phi^T phi)^T
    let n = phi.len();
    let row: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| phi[k] * state.phi[(k, j)]).sum())
        .collect();
    let phi_dot = Mat::outer(phi, &row).scale(-mu);
    let pw = dot(phi, &state.w);
    let w_dot = phi.iter().map(|p| -mu * p * pw + mu * p * w).collect();
    Ok(ExtensionState {
        y: y_dot,
        phi: phi_dot,
        w: w_dot,
    })
}
