//! Mixing: multiply `Y = M theta + W` by `adj{M}` to get `n` decoupled scalar
//! regressions `scalY_i = delta * theta_i + scalW_i` with `delta = det{M}`.

use crate::error::Result;
use crate::extension::{ExtensionScheme, ExtensionState};
use crate::smallmat::{adjugate, det, trace_prod, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSignals {
    pub scal_y: Vec<f64>,
    pub delta: f64,
    /// Mixed disturbance; simulator bookkeeping, never read by the laws.
    pub scal_w: Vec<f64>,
    /// Jacobi rate of `delta`. Zero unless produced by [`mix_with_rate`].
    pub delta_dot: f64,
}

/// `scalY = adj{M} Y`, `delta = det{M}`, `scalW = adj{M} W`.
/// `M` is singular at the initial time of both schemes, giving `delta = 0`.
pub fn mix(state: &ExtensionState, scheme: &ExtensionScheme) -> Result<MixedSignals> {
    let m = scheme.effective_matrix(&state.phi);
    let adj = adjugate(&m)?;
    Ok(mix_with_adjugate(state, &m, &adj))
}

fn mix_with_adjugate(state: &ExtensionState, m: &Mat, adj: &Mat) -> MixedSignals {
    MixedSignals {
        scal_y: adj.mul_vec(&state.y),
        delta: det(m).expect("effective matrix is square"),
        scal_w: adj.mul_vec(&state.w),
        delta_dot: 0.0,
    }
}

/// `d/dt det{M} = tr(adj{M} M')` for the scheme's effective matrix.
pub fn delta_dot(
    state: &ExtensionState,
    state_dot: &ExtensionState,
    scheme: &ExtensionScheme,
) -> Result<f64> {
    let adj = adjugate(&scheme.effective_matrix(&state.phi))?;
    trace_prod(&adj, &scheme.effective_rate(&state_dot.phi))
}

/// [`mix`] and [`delta_dot`] sharing one adjugate evaluation.
pub fn mix_with_rate(
    state: &ExtensionState,
    state_dot: &ExtensionState,
    scheme: &ExtensionScheme,
) -> Result<MixedSignals> {
    let m = scheme.effective_matrix(&state.phi);
    let adj = adjugate(&m)?;
    let mut mixed = mix_with_adjugate(state, &m, &adj);
    mixed.delta_dot = trace_prod(&adj, &scheme.effective_rate(&state_dot.phi))?;
    Ok(mixed)
}
