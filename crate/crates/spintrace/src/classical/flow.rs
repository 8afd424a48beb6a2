//! Time evolution of the classical spin chain with optional action and
//! monodromy accumulation.
//!
//! The augmented state `[u, v, action, monodromy rows]` is integrated with the
//! adaptive solver; whenever an accepted step leaves a site's chart validity
//! region the site is flipped to the antipodal chart, and the monodromy rows
//! are transformed with the canonical flip Jacobian. The action accumulates
//! the bulk integrand of the closed-orbit action; [`action_integral`] adds
//! the boundary logarithms needed for open trajectories.

use std::cell::RefCell;

use crate::chart::Chart;
use crate::classical::hamiltonian::ClassicalHamiltonian;
use crate::classical::integrator::{StepControl, integrate};
use crate::classical::state::ClassicalState;
use crate::classical::tangent::{flip_tangent_jacobian, k_factors, tangent_flow};
use crate::error::Result;
use crate::{C64, CMat};

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub with_action: bool,
    pub with_tangent: bool,
    /// Keep the state at every accepted step (for plotting / return detection).
    pub record_states: bool,
    /// Keep the tangent matrix at every accepted step (for branch tracking);
    /// implies nothing unless `with_tangent` is also set.
    pub record_tangents: bool,
    /// Upper bound on the accepted step size.
    pub h_max: f64,
    /// Tie the action gauge per site to the chart of the initial point rather
    /// than always the standard chart. Trace-formula saddle points that live
    /// on the inverted chart (driven maps near a pole) need the canonical
    /// one-form of their own chart; the two gauges differ by a total
    /// derivative and agree for saddles on the standard chart.
    pub saddle_gauge: bool,
    /// Complex factor multiplying the vector field: integrating with
    /// tilt = e^{-i alpha} follows the holomorphic flow along the ray
    /// t e^{-i alpha}. Used to push unit-circle eigenvalue passages of the
    /// tangent map off the real axis with a definite sense during Maslov
    /// branch tracking.
    pub tilt: C64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            rtol: 1e-10,
            atol: 1e-12,
            with_action: false,
            with_tangent: false,
            record_states: false,
            record_tangents: false,
            h_max: f64::INFINITY,
            saddle_gauge: false,
            tilt: C64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySegment {
    pub t0: f64,
    pub t1: f64,
    pub initial: ClassicalState,
    pub final_state: ClassicalState,
    /// Bulk action integral (the closed-orbit action form, no boundary terms).
    pub bulk_action: Option<C64>,
    /// Monodromy matrix in canonical deviation variables.
    pub monodromy: Option<CMat>,
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    /// Tangent matrices at the recorded times (with `record_tangents`).
    pub tangents: Vec<CMat>,
    /// Accumulated determinant factor picked up by the M_bb block from chart
    /// flips, aligned with `tangents`; dividing det M_bb by this restores the
    /// standard-chart (physical) branch.
    pub bb_corrections: Vec<C64>,
    pub chart_switches: usize,
    /// Max |H(t) - H(0)| over accepted steps.
    pub energy_drift: f64,
}

/// Bulk action integrand `sum_i c_i - H`. The canonical one-form of the gauge
/// chart, evaluated in the site's current chart: the local form when the two
/// charts agree, the converted form otherwise.
fn action_rate(
    state: &ClassicalState,
    derivs: &crate::classical::hamiltonian::Derivatives,
    gauge: &[Chart],
) -> C64 {
    let mut c = C64::new(0.0, 0.0);
    for (i, site) in state.sites.iter().enumerate() {
        let d = C64::new(1.0, 0.0) + site.u * site.v;
        let combo = site.u * derivs.du[i] + site.v * derivs.dv[i];
        c += if site.chart == gauge[i] {
            d * combo / 2.0
        } else {
            -d * combo / (2.0 * site.u * site.v)
        };
    }
    c - derivs.value
}

/// Evolve `initial` from `t0` to `t1` under the classical Hamiltonian.
pub fn evolve(
    h: &ClassicalHamiltonian,
    initial: &ClassicalState,
    t0: f64,
    t1: f64,
    opts: &EvolveOptions,
) -> Result<TrajectorySegment> {
    let gauge: Vec<Chart> = if opts.saddle_gauge {
        initial.charts()
    } else {
        vec![Chart::Standard; h.n_sites]
    };
    evolve_gauged(h, initial, t0, t1, opts, &gauge)
}

/// [`evolve`] with an explicit action gauge per site. Needed when a segment is
/// part of a longer composed trajectory whose saddle point fixes the gauge.
pub fn evolve_gauged(
    h: &ClassicalHamiltonian,
    initial: &ClassicalState,
    t0: f64,
    t1: f64,
    opts: &EvolveOptions,
    gauge: &[Chart],
) -> Result<TrajectorySegment> {
    let n = h.n_sites;
    assert_eq!(initial.n_sites(), n);
    let dim = 2 * n;
    let act_off = dim;
    let tan_off = act_off + usize::from(opts.with_action);
    let total = tan_off + if opts.with_tangent { dim * dim } else { 0 };

    let mut y = vec![C64::new(0.0, 0.0); total];
    y[..dim].copy_from_slice(&initial.to_flat());
    if opts.with_tangent {
        for i in 0..dim {
            y[tan_off + i * dim + i] = C64::new(1.0, 0.0);
        }
    }

    let charts = RefCell::new(initial.charts());
    let e0 = h.eval(initial)?;

    let rhs = |_t: f64, y: &[C64]| -> Result<Vec<C64>> {
        let state = ClassicalState::from_flat(&y[..dim], &charts.borrow());
        let derivs = h.derivatives(&state)?;
        let k = k_factors(&state, h.j_class);
        let mut dy = vec![C64::new(0.0, 0.0); y.len()];
        for i in 0..n {
            dy[i] = k[i] * derivs.dv[i];
            dy[n + i] = -k[i] * derivs.du[i];
        }
        if opts.with_action {
            dy[act_off] = action_rate(&state, &derivs, gauge);
        }
        if opts.with_tangent {
            let g = tangent_flow(h, &state, &derivs);
            let m = CMat::from_shape_vec((dim, dim), y[tan_off..].to_vec()).expect("shape");
            let dm = g.dot(&m);
            dy[tan_off..].copy_from_slice(dm.as_slice().expect("contiguous"));
        }
        Ok(dy)
    };

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut tangents = Vec::new();
    let mut bb_corrections = Vec::new();
    let mut bb_corr = C64::new(1.0, 0.0);
    let mut chart_switches = 0usize;
    let mut energy_drift = 0.0f64;
    let record_tangents = opts.record_tangents && opts.with_tangent;
    if opts.record_states || record_tangents {
        times.push(t0);
        states.push(initial.clone());
        if record_tangents {
            tangents.push(ndarray::Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0)));
            bb_corrections.push(bb_corr);
        }
    }

    let ctrl = StepControl {
        rtol: opts.rtol,
        atol: opts.atol,
        h_max: opts.h_max,
        ..StepControl::default()
    };
    integrate(rhs, t0, t1, &mut y, &ctrl, |t, y| {
        let mut mutated = false;
        {
            let mut ch = charts.borrow_mut();
            for i in 0..n {
                let (u, v) = (y[i], y[n + i]);
                if u.norm() > crate::chart::CHART_SWITCH_RADIUS
                    || v.norm() > crate::chart::CHART_SWITCH_RADIUS
                {
                    y[i] = 1.0 / u;
                    y[n + i] = 1.0 / v;
                    if opts.with_tangent {
                        let (ja, jb) = flip_tangent_jacobian(v);
                        for col in 0..dim {
                            y[tan_off + i * dim + col] *= ja;
                            y[tan_off + (n + i) * dim + col] *= jb;
                        }
                        bb_corr *= jb;
                    }
                    ch[i] = match ch[i] {
                        Chart::Standard => Chart::Inverted,
                        Chart::Inverted => Chart::Standard,
                    };
                    chart_switches += 1;
                    mutated = true;
                }
            }
        }
        let state = ClassicalState::from_flat(&y[..dim], &charts.borrow());
        let e = h.eval(&state)?;
        energy_drift = energy_drift.max((e - e0).norm());
        if opts.record_states || record_tangents {
            times.push(t);
            states.push(state);
            if record_tangents {
                tangents.push(
                    CMat::from_shape_vec((dim, dim), y[tan_off..].to_vec()).expect("shape"),
                );
                bb_corrections.push(bb_corr);
            }
        }
        Ok(mutated)
    })?;

    let final_state = ClassicalState::from_flat(&y[..dim], &charts.borrow());
    let bulk_action = opts.with_action.then(|| y[act_off]);
    let monodromy = opts.with_tangent.then(|| {
        CMat::from_shape_vec((dim, dim), y[tan_off..].to_vec()).expect("shape")
    });

    Ok(TrajectorySegment {
        t0,
        t1,
        initial: initial.clone(),
        final_state,
        bulk_action,
        monodromy,
        times,
        states,
        tangents,
        bb_corrections,
        chart_switches,
        energy_drift,
    })
}

/// Full open-trajectory action: boundary logarithms plus the bulk integral.
///
/// Requires the segment to have been evolved with `with_action`. Principal
/// branch of the logarithms; adequate near real trajectories.
pub fn action_integral(h: &ClassicalHamiltonian, seg: &TrajectorySegment) -> C64 {
    let bulk = seg.bulk_action.expect("segment evolved without action");
    let i_j = C64::new(0.0, h.j_class);
    let mut logs = C64::new(0.0, 0.0);
    for site in seg.initial.sites.iter().chain(&seg.final_state.sites) {
        logs += site.one_plus_uv_physical().ln();
    }
    bulk - i_j * logs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::SiteCoord;
    use crate::context::ModelContext;
    use crate::hamiltonian::SpinComponent::{X, Z};
    use crate::hamiltonian::{HamiltonianSpec, Term};
    use crate::linalg::symplecticity_residual;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn ctx1() -> ModelContext {
        ModelContext::new(1, 10, 1.0).unwrap()
    }

    #[test]
    fn latitude_precession_closed_form() {
        // H = omega * J n3 gives u(t) = u(0) e^{-i omega t}.
        let omega = 1.3;
        let h = ClassicalHamiltonian::new(&HamiltonianSpec::monomial(omega, vec![(0, Z)]), &ctx1())
            .unwrap();
        let s0 = ClassicalState::from_angles(&[(1.1, 0.4)]);
        let t = 0.9;
        let seg = evolve(&h, &s0, 0.0, t, &EvolveOptions::default()).unwrap();
        let expected = s0.sites[0].u * C64::new(0.0, -omega * t).exp();
        assert!((seg.final_state.sites[0].u - expected).norm() < 1e-9);
        assert!(seg.final_state.reality_residual() < 1e-9);
        assert!(seg.energy_drift < 1e-9);
    }

    #[test]
    fn closed_orbit_action_of_latitude_precession() {
        // Over one period the closed-orbit action equals 2 pi J_class,
        // independent of latitude.
        let omega = 0.7;
        let ctx = ctx1();
        let h = ClassicalHamiltonian::new(&HamiltonianSpec::monomial(omega, vec![(0, Z)]), &ctx)
            .unwrap();
        for theta in [0.4, 1.4, 2.6] {
            let s0 = ClassicalState::from_angles(&[(theta, 0.0)]);
            let period = 2.0 * PI / omega;
            let opts = EvolveOptions { with_action: true, ..Default::default() };
            let seg = evolve(&h, &s0, 0.0, period, &opts).unwrap();
            assert!(seg.final_state.sphere_distance(&s0) < 1e-8);
            let s = seg.bulk_action.unwrap();
            assert_abs_diff_eq!(s.re, 2.0 * PI * ctx.j_class(), epsilon = 1e-7);
            assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn polar_orbit_switches_charts_and_returns() {
        // Rotation about the x-axis carries the spin through both poles.
        let omega = 1.0;
        let h = ClassicalHamiltonian::new(&HamiltonianSpec::monomial(omega, vec![(0, X)]), &ctx1())
            .unwrap();
        let s0 = ClassicalState::from_angles(&[(PI / 2.0, PI / 2.0)]);
        let opts = EvolveOptions { with_tangent: true, ..Default::default() };
        let seg = evolve(&h, &s0, 0.0, 2.0 * PI / omega, &opts).unwrap();
        assert!(seg.chart_switches >= 2, "switches = {}", seg.chart_switches);
        assert!(seg.final_state.sphere_distance(&s0) < 1e-8);
        assert!(seg.energy_drift < 1e-9);
        // A global rotation is isochronous: M(T) = 1.
        let m = seg.monodromy.unwrap();
        let id: CMat = Array2::eye(2);
        let dev = (&m - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "monodromy deviation {dev}");
    }

    fn two_site_model() -> (ModelContext, ClassicalHamiltonian) {
        let ctx = ModelContext::new(2, 8, 0.5).unwrap();
        let spec = HamiltonianSpec::new(vec![
            Term::new(0.8, vec![(0, Z)]),
            Term::new(0.8, vec![(1, Z)]),
            Term::new(0.5, vec![(0, X), (1, X)]),
            Term::new(0.3, vec![(0, Z), (0, Z)]),
        ]);
        let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
        (ctx, h)
    }

    #[test]
    fn monodromy_matches_finite_differences_and_is_symplectic() {
        let (_ctx, h) = two_site_model();
        let s0 = ClassicalState::from_angles(&[(1.0, 0.2), (2.1, -0.9)]);
        let t = 0.8;
        let opts = EvolveOptions { with_tangent: true, ..Default::default() };
        let seg = evolve(&h, &s0, 0.0, t, &opts).unwrap();
        let m = seg.monodromy.clone().unwrap();
        assert!(symplecticity_residual(&m) < 1e-8);

        // Independent route: finite differences of the flow map in canonical
        // deviation coordinates.
        let eps = 1e-6;
        let k0 = k_factors(&s0, h.j_class);
        let k1 = k_factors(&seg.final_state, h.j_class);
        let n = 2;
        for col in 0..2 * n {
            let mut fd_col = vec![C64::new(0.0, 0.0); 2 * n];
            for sign in [1.0f64, -1.0] {
                let mut flat = s0.to_flat();
                if col < n {
                    flat[col] += sign * eps * k0[col];
                } else {
                    flat[col] += sign * eps;
                }
                let sp = ClassicalState::from_flat(&flat, &s0.charts());
                let segp = evolve(&h, &sp, 0.0, t, &EvolveOptions::default()).unwrap();
                assert_eq!(segp.final_state.charts(), seg.final_state.charts());
                let fp = segp.final_state.to_flat();
                for i in 0..2 * n {
                    let tilde = if i < n { fp[i] / k1[i] } else { fp[i] };
                    fd_col[i] += sign * tilde / (2.0 * eps);
                }
            }
            for i in 0..2 * n {
                assert!(
                    (fd_col[i] - m[(i, col)]).norm() < 2e-5 * (1.0 + m[(i, col)].norm()),
                    "M[{i}][{col}]: fd {} vs tangent {}",
                    fd_col[i],
                    m[(i, col)]
                );
            }
        }
    }

    #[test]
    fn open_action_solves_hamilton_jacobi() {
        // Total derivative of S(U', V'') w.r.t. U' along the family with V'
        // fixed must equal dS/dU' + dS/dV'' * dV''/dU' with the partials given
        // by the Hamilton-Jacobi relations.
        let (_ctx, h) = two_site_model();
        let t = 0.6;
        let opts = EvolveOptions { with_action: true, ..Default::default() };
        let base_u = [C64::new(0.4, 0.3), C64::new(-0.2, 0.6)];
        let base_v = [C64::new(0.5, -0.1), C64::new(0.3, 0.2)];
        let run = |du0: C64| -> (C64, Vec<C64>) {
            let mut us = base_u;
            us[0] += du0;
            let s = ClassicalState::complex_from_uv(&us, &base_v);
            let seg = evolve(&h, &s, 0.0, t, &opts).unwrap();
            let vpp = seg.final_state.sites.iter().map(|c| c.v).collect();
            (action_integral(&h, &seg), vpp)
        };
        let eps = 1e-6;
        let (sp, vp) = run(C64::new(eps, 0.0));
        let (sm, vm) = run(C64::new(-eps, 0.0));
        let ds_total = (sp - sm) / (2.0 * eps);

        let s = ClassicalState::complex_from_uv(&base_u, &base_v);
        let seg = evolve(&h, &s, 0.0, t, &opts).unwrap();
        let jc = h.j_class;
        let up = s.sites[0];
        let one = C64::new(1.0, 0.0);
        // dS/dU'_0 plus, since V'' at every site moves with U'_0, the chain
        // rule terms dS/dV''_i * dV''_i/dU'_0.
        let mut expected = -C64::new(0.0, 2.0 * jc) * up.v / (one + up.u * up.v);
        for (i, fin) in seg.final_state.sites.iter().enumerate() {
            let dvpp = (vp[i] - vm[i]) / (2.0 * eps);
            expected += -C64::new(0.0, 2.0 * jc) * fin.u / (one + fin.u * fin.v) * dvpp;
        }
        assert!(
            (ds_total - expected).norm() < 1e-6 * (1.0 + expected.norm()),
            "HJ mismatch: fd {ds_total}, expected {expected}"
        );
    }

    #[test]
    fn inverted_chart_initial_state_evolves_consistently() {
        // Same physical initial point on both charts must give the same
        // physical trajectory.
        let (_ctx, h) = two_site_model();
        let a = ClassicalState::from_angles(&[(0.5, 1.0), (1.3, -0.4)]);
        let b = ClassicalState::new(vec![a.sites[0].flipped(), a.sites[1]]);
        let t = 1.1;
        let sa = evolve(&h, &a, 0.0, t, &EvolveOptions::default()).unwrap();
        let sb = evolve(&h, &b, 0.0, t, &EvolveOptions::default()).unwrap();
        assert!(sa.final_state.sphere_distance(&sb.final_state) < 1e-8);
    }

    #[test]
    fn backward_evolution_inverts_forward() {
        let (_ctx, h) = two_site_model();
        let s0 = ClassicalState::from_angles(&[(0.8, -0.6), (1.9, 2.0)]);
        let fwd = evolve(&h, &s0, 0.0, 1.4, &EvolveOptions::default()).unwrap();
        let back = evolve(&h, &fwd.final_state, 1.4, 0.0, &EvolveOptions::default()).unwrap();
        assert!(back.final_state.sphere_distance(&s0) < 1e-8);
    }

    #[test]
    fn zero_duration_segment() {
        let (_ctx, h) = two_site_model();
        let s0 = ClassicalState::from_angles(&[(0.8, -0.6), (1.9, 2.0)]);
        let opts = EvolveOptions { with_action: true, with_tangent: true, ..Default::default() };
        let seg = evolve(&h, &s0, 0.0, 0.0, &opts).unwrap();
        assert_eq!(seg.final_state, s0);
        assert_eq!(seg.bulk_action.unwrap(), C64::new(0.0, 0.0));
        let _ = SiteCoord::real(C64::new(0.1, 0.0), Chart::Standard);
    }
}
