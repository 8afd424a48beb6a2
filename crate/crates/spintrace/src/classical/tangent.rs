//! Linearized flow in canonical deviation variables.
//!
//! Deviations `(dU~, dV~) = (dU/k, dV)` with `k_i = (1+u_i v_i)^2 / (2i J)`
//! obey canonical equations with a quadratic Hamiltonian; the generator `G`
//! below is its Hamiltonian vector field, so `d/dt M = G M` propagates the
//! monodromy matrix. The same relations hold per chart because the flow keeps
//! its Hamiltonian form under coordinate inversion.

use crate::C64;
use crate::CMat;
use crate::classical::hamiltonian::{ClassicalHamiltonian, Derivatives};
use crate::classical::state::ClassicalState;
use crate::error::Result;

/// `k_i` factors at a state for the classical Hamiltonian's `J_class`.
pub fn k_factors(state: &ClassicalState, j_class: f64) -> Vec<C64> {
    state
        .sites
        .iter()
        .map(|s| {
            let d = C64::new(1.0, 0.0) + s.u * s.v;
            d * d / C64::new(0.0, 2.0 * j_class)
        })
        .collect()
}

/// Generator of the canonical tangent flow, obtained by directly linearizing
/// the equations of motion and changing to the tilde variables.
pub fn tangent_flow(
    h: &ClassicalHamiltonian,
    state: &ClassicalState,
    derivs: &Derivatives,
) -> CMat {
    let n = h.n_sites;
    let k = k_factors(state, h.j_class);
    let mut g = CMat::zeros((2 * n, 2 * n));
    let hess = &derivs.hessian;
    for i in 0..n {
        let si = &state.sites[i];
        let d_i = C64::new(1.0, 0.0) + si.u * si.v;
        let two_u_over_d = 2.0 * si.u / d_i;
        let two_v_over_d = 2.0 * si.v / d_i;
        for kk in 0..n {
            // G_uu[i][k] = k_k H_{u_k v_i}
            g[(i, kk)] = k[kk] * hess.huv[(kk, i)];
            // G_uv[i][k] = H_{v_i v_k}
            g[(i, n + kk)] = hess.hvv[(i, kk)];
            // G_vu[i][k] = -k_i k_k H_{u_i u_k}
            g[(n + i, kk)] = -k[i] * k[kk] * hess.huu[(i, kk)];
            // G_vv[i][k] = -k_i H_{u_i v_k}
            g[(n + i, n + kk)] = -k[i] * hess.huv[(i, kk)];
        }
        g[(i, i)] += two_u_over_d * k[i] * derivs.du[i];
        g[(i, n + i)] += two_u_over_d * derivs.dv[i];
        g[(n + i, i)] -= two_v_over_d * k[i] * k[i] * derivs.du[i];
        g[(n + i, n + i)] -= two_u_over_d * k[i] * derivs.du[i];
    }
    g
}

/// The same generator assembled from the quadratic deviation Hamiltonian
/// `H~ = 1/2 x^T S x`: `G = Omega S` with `Omega = [[0, 1], [-1, 0]]`.
/// Kept as an independent construction for cross-checks.
pub fn tangent_flow_from_quadratic(
    h: &ClassicalHamiltonian,
    state: &ClassicalState,
    derivs: &Derivatives,
) -> CMat {
    let n = h.n_sites;
    let k = k_factors(state, h.j_class);
    let hess = &derivs.hessian;
    // Blocks of the symmetric form: H~ = 1/2 dU~ Suu dU~ + dU~ C dV~ + 1/2 dV~ Svv dV~.
    let mut suu = CMat::zeros((n, n));
    let mut c = CMat::zeros((n, n));
    let mut svv = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            suu[(i, j)] = hess.huu[(i, j)] * k[i] * k[j];
            c[(i, j)] = hess.huv[(i, j)] * k[i];
            svv[(i, j)] = hess.hvv[(i, j)];
        }
        let s = &state.sites[i];
        let d = C64::new(1.0, 0.0) + s.u * s.v;
        suu[(i, i)] += 2.0 * derivs.du[i] * s.v * k[i] * k[i] / d;
        c[(i, i)] += 2.0 * derivs.du[i] * s.u * k[i] / d;
        svv[(i, i)] += 2.0 * derivs.dv[i] * s.u / d;
    }
    // dU~' = C^T dU~ + Svv dV~ ; dV~' = -Suu dU~ - C dV~.
    let mut g = CMat::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = c[(j, i)];
            g[(i, n + j)] = svv[(i, j)];
            g[(n + i, j)] = -suu[(i, j)];
            g[(n + i, n + j)] = -c[(i, j)];
        }
    }
    g
}

/// Convenience wrapper computing derivatives internally.
pub fn tangent_generator(h: &ClassicalHamiltonian, state: &ClassicalState) -> Result<CMat> {
    let d = h.derivatives(state)?;
    Ok(tangent_flow(h, state, &d))
}

/// Jacobian of the chart flip acting on canonical deviations of one site,
/// expressed in the pre-flip coordinates: `dA~ = -v^2 dU~`, `dB~ = -dV~/v^2`.
pub fn flip_tangent_jacobian(v_before: C64) -> (C64, C64) {
    let v2 = v_before * v_before;
    (-v2, -1.0 / v2)
}

/// Re-express a tangent matrix over a closed loop in the initial charts.
///
/// `m` maps initial-chart deviations to deviations in the state's current
/// charts; a loop that grazes the switch radius can end with an odd number of
/// flips on some site, leaving the two frames mismatched (the eigenvalues of
/// such a matrix are meaningless). Applying the flip Jacobian at the final
/// point closes the frame; the flip is involutive at matched coordinates, so
/// the corrected matrix is also continuous across mid-loop switches.
pub fn close_loop_frame(
    m: &mut CMat,
    state: &ClassicalState,
    initial_charts: &[crate::chart::Chart],
) {
    let n = state.n_sites();
    let dim = 2 * n;
    for i in 0..n {
        let site = &state.sites[i];
        if site.chart != initial_charts[i] {
            let (ja, jb) = flip_tangent_jacobian(site.v);
            for col in 0..dim {
                m[(i, col)] *= ja;
                m[(n + i, col)] *= jb;
            }
        }
    }
}
