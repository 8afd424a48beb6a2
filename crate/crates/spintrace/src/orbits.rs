//! Search for real periodic orbits of the classical flow.
//!
//! Strategy: random seeds are projected onto the energy shell, integrated
//! forward while watching for near-returns, and each near-return is polished
//! by a damped Gauss-Newton iteration acting on the real spherical angles and
//! the period. A minimum-norm least-squares step absorbs both the time-shift
//! gauge freedom along the orbit and the rank deficiency of degenerate
//! (integrable) families.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::classical::{ClassicalHamiltonian, ClassicalState, EvolveOptions, evolve};
use crate::classical::tangent::close_loop_frame;
use crate::error::{Result, SpinError};
use crate::linalg::{eye, lstsq_real, symplecticity_residual};
use crate::CMat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Poincare section `angles[coordinate] = level` used to thin return
/// candidates; `coordinate` indexes the flattened `[theta_0, phi_0, ...]`.
#[derive(Debug, Clone, Copy)]
pub struct PoincareSection {
    pub coordinate: usize,
    pub level: f64,
}

#[derive(Debug, Clone)]
pub struct OrbitSearchConfig {
    pub n_seeds: usize,
    pub rng_seed: u64,
    /// How long each seed trajectory is followed while looking for returns.
    pub t_search: f64,
    pub newton_tol: f64,
    pub max_iterations: usize,
    /// Raw-return distance below which a candidate is polished.
    pub return_threshold: f64,
    pub dedup_distance: f64,
    pub section: Option<PoincareSection>,
}

impl Default for OrbitSearchConfig {
    fn default() -> Self {
        OrbitSearchConfig {
            n_seeds: 24,
            rng_seed: 1,
            t_search: 30.0,
            newton_tol: 1e-10,
            max_iterations: 40,
            return_threshold: 0.2,
            dedup_distance: 1e-6,
            section: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SearchWindow {
    /// Orbits on the energy shell `H = E`, any period up to `t_search`.
    Energy(f64),
    /// Orbits with period inside the window, energy unconstrained.
    PeriodRange(f64, f64),
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub initial: ClassicalState,
    pub period: f64,
    pub primitive_period: f64,
    pub repetitions: u32,
    pub energy: f64,
    /// Closed-orbit action S(T), real for real orbits.
    pub action: f64,
    /// Monodromy over the full period T in canonical deviation variables.
    pub monodromy: CMat,
    /// True when the monodromy is the identity, i.e. the orbit belongs to a
    /// continuous family of equal period (integrable / isochronous case).
    pub degenerate_family: bool,
}

fn angles_of(state: &ClassicalState) -> Vec<f64> {
    state.to_angles().into_iter().flat_map(|(t, p)| [t, p]).collect()
}

fn state_of(z: &[f64]) -> ClassicalState {
    let pairs: Vec<(f64, f64)> = z.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    ClassicalState::from_angles(&pairs)
}

/// Closure residual in unit-vector components, plus optional energy residual.
fn residual(
    h: &ClassicalHamiltonian,
    z: &[f64],
    period: f64,
    energy: Option<f64>,
    rtol: f64,
) -> Result<Vec<f64>> {
    let s0 = state_of(z);
    let opts = EvolveOptions { rtol, ..Default::default() };
    let seg = evolve(h, &s0, 0.0, period, &opts)?;
    let n0 = s0.real_unit_vectors();
    let n1 = seg.final_state.real_unit_vectors();
    let mut r: Vec<f64> = n0
        .iter()
        .zip(&n1)
        .flat_map(|(a, b)| [b[0] - a[0], b[1] - a[1], b[2] - a[2]])
        .collect();
    if let Some(e) = energy {
        let val = h.eval(&s0)?.re;
        r.push((val - e) / e.abs().max(1.0));
    }
    Ok(r)
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Gauss-Newton polish of a (state, period) candidate.
fn polish(
    h: &ClassicalHamiltonian,
    z0: Vec<f64>,
    t0: f64,
    energy: Option<f64>,
    cfg: &OrbitSearchConfig,
) -> Result<(ClassicalState, f64)> {
    let mut z = z0;
    let mut period = t0;
    let rtol = 1e-11;
    let mut r = residual(h, &z, period, energy, rtol)?;
    for it in 0..cfg.max_iterations {
        let rn = max_abs(&r);
        if rn < cfg.newton_tol {
            return Ok((state_of(&z), period));
        }
        let nu = z.len() + 1;
        let mut jac = Array2::<f64>::zeros((r.len(), nu));
        for col in 0..nu {
            let step = if col < z.len() { 1e-6 } else { 1e-6 * period.abs().max(1.0) };
            let mut zp = z.clone();
            let mut zm = z.clone();
            let mut tp = period;
            let mut tm = period;
            if col < z.len() {
                zp[col] += step;
                zm[col] -= step;
            } else {
                tp += step;
                tm -= step;
            }
            let rp = residual(h, &zp, tp, energy, rtol)?;
            let rm = residual(h, &zm, tm, energy, rtol)?;
            for i in 0..r.len() {
                jac[(i, col)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let b = Array1::from_iter(r.iter().map(|x| -x));
        let delta = lstsq_real(&jac, &b)?;
        // Backtracking line search.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let mut zt = z.clone();
            for (i, zi) in zt.iter_mut().enumerate() {
                *zi += lambda * delta[i];
            }
            let tt = period + lambda * delta[z.len()];
            if tt <= 1e-3 {
                lambda *= 0.5;
                continue;
            }
            if let Ok(rt) = residual(h, &zt, tt, energy, rtol) {
                if max_abs(&rt) < rn || it == 0 {
                    z = zt;
                    period = tt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Stalled at the FD-Jacobian noise floor; accept if still tight.
            if rn < 5e-8 {
                return Ok((state_of(&z), period));
            }
            return Err(SpinError::NoConvergence { iterations: it, residual: rn });
        }
    }
    let rn = max_abs(&r);
    // Same noise-floor criterion as the stalled-line-search branch above.
    if rn < cfg.newton_tol.max(5e-8) {
        Ok((state_of(&z), period))
    } else {
        Err(SpinError::NoConvergence { iterations: cfg.max_iterations, residual: rn })
    }
}

/// Move a random point onto the energy shell by gradient steps on (H - E)^2.
fn project_to_shell(
    h: &ClassicalHamiltonian,
    z0: Vec<f64>,
    e: f64,
) -> Option<Vec<f64>> {
    let mut z = z0;
    for _ in 0..60 {
        let s = state_of(&z);
        let val = h.eval(&s).ok()?.re;
        let mismatch = val - e;
        if mismatch.abs() < 1e-11 * e.abs().max(1.0) {
            return Some(z);
        }
        // Finite-difference gradient of H in angle space.
        let mut g = vec![0.0; z.len()];
        let step = 1e-6;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += step;
            zm[i] -= step;
            let hp = h.eval(&state_of(&zp)).ok()?.re;
            let hm = h.eval(&state_of(&zm)).ok()?.re;
            g[i] = (hp - hm) / (2.0 * step);
        }
        let g2: f64 = g.iter().map(|x| x * x).sum();
        if g2 < 1e-18 {
            return None;
        }
        for i in 0..z.len() {
            z[i] -= g[i] * mismatch / g2;
        }
    }
    None
}

/// Times of near-returns of the seed trajectory to its starting point.
fn near_return_times(
    h: &ClassicalHamiltonian,
    s0: &ClassicalState,
    cfg: &OrbitSearchConfig,
    t_min: f64,
) -> Result<Vec<f64>> {
    let opts = EvolveOptions { rtol: 1e-9, record_states: true, ..Default::default() };
    let seg = evolve(h, s0, 0.0, cfg.t_search, &opts)?;
    let dist: Vec<f64> = seg.states.iter().map(|s| s.sphere_distance(s0)).collect();
    let mut out = Vec::new();
    for i in 1..dist.len().saturating_sub(1) {
        if seg.times[i] < t_min.max(1e-2) {
            continue;
        }
        if dist[i] < cfg.return_threshold && dist[i] <= dist[i - 1] && dist[i] <= dist[i + 1] {
            if let Some(sec) = cfg.section {
                let a = angles_of(&seg.states[i]);
                if (a[sec.coordinate] - sec.level).abs() > 0.5 {
                    continue;
                }
            }
            out.push(seg.times[i]);
        }
    }
    Ok(out)
}

/// Smallest period at which the orbit closes, and the repetition count.
pub fn primitive_period(
    h: &ClassicalHamiltonian,
    initial: &ClassicalState,
    period: f64,
) -> Result<(f64, u32)> {
    let opts = EvolveOptions { rtol: 1e-11, ..Default::default() };
    let mut best = 1u32;
    for r in 2..=12u32 {
        let tp = period / r as f64;
        if tp < 1e-3 {
            break;
        }
        let seg = evolve(h, initial, 0.0, tp, &opts)?;
        if seg.final_state.sphere_distance(initial) < 1e-7 {
            best = best.max(r);
        }
    }
    Ok((period / best as f64, best))
}

fn build_orbit(
    h: &ClassicalHamiltonian,
    initial: ClassicalState,
    period: f64,
) -> Result<PeriodicOrbit> {
    let (t_p, r) = primitive_period(h, &initial, period)?;
    let opts = EvolveOptions {
        rtol: 1e-11,
        with_action: true,
        with_tangent: true,
        ..Default::default()
    };
    let seg = evolve(h, &initial, 0.0, period, &opts)?;
    let action = seg.bulk_action.unwrap();
    let mut m = seg.monodromy.unwrap();
    close_loop_frame(&mut m, &seg.final_state, &initial.charts());
    let id = eye(m.nrows());
    let dev = (&m - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let energy = h.eval(&initial)?.re;
    Ok(PeriodicOrbit {
        initial,
        period,
        primitive_period: t_p,
        repetitions: r,
        energy,
        action: action.re,
        monodromy: m,
        degenerate_family: dev < 1e-5,
    })
}

/// Minimum distance from `point` to the sampled trajectory of `orbit`,
/// refined locally around the best sample.
fn distance_to_orbit(
    h: &ClassicalHamiltonian,
    orbit: &PeriodicOrbit,
    point: &ClassicalState,
) -> Result<f64> {
    let opts = EvolveOptions { rtol: 1e-9, record_states: true, ..Default::default() };
    let seg = evolve(h, &orbit.initial, 0.0, orbit.primitive_period, &opts)?;
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for (i, s) in seg.states.iter().enumerate() {
        let d = s.sphere_distance(point);
        if d < best {
            best = d;
            best_i = i;
        }
    }
    // Golden-section refinement around the best sample.
    let t_lo = if best_i == 0 { seg.times[0] } else { seg.times[best_i - 1] };
    let t_hi = if best_i + 1 < seg.times.len() { seg.times[best_i + 1] } else { seg.times[best_i] };
    let base = &seg.states[best_i];
    let t_mid = seg.times[best_i];
    let f = |t: f64| -> f64 {
        let o = EvolveOptions { rtol: 1e-10, ..Default::default() };
        match evolve(h, base, t_mid, t, &o) {
            Ok(s) => s.final_state.sphere_distance(point),
            Err(_) => f64::INFINITY,
        }
    };
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (t_lo, t_hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..40 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    Ok(best.min(f1).min(f2))
}

fn is_duplicate(
    h: &ClassicalHamiltonian,
    existing: &PeriodicOrbit,
    candidate: &PeriodicOrbit,
) -> bool {
    let rel = (existing.primitive_period - candidate.primitive_period).abs()
        / existing.primitive_period.max(1e-6);
    if rel > 1e-4 {
        return false;
    }
    match distance_to_orbit(h, existing, &candidate.initial) {
        Ok(d) => d < existing.primitive_period.max(1.0) * 1e-5 + 10.0 * 1e-6,
        Err(_) => false,
    }
}

/// Locate periodic orbits; duplicates are removed modulo time shift, and the
/// returned list is sorted by primitive period.
pub fn find_periodic_orbits(
    h: &ClassicalHamiltonian,
    window: SearchWindow,
    cfg: &OrbitSearchConfig,
) -> Result<Vec<PeriodicOrbit>> {
    let n = h.n_sites;
    let seeds: Vec<Vec<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        (0..cfg.n_seeds)
            .map(|_| {
                (0..n)
                    .flat_map(|_| {
                        // Uniform on the sphere.
                        let c: f64 = rng.gen_range(-1.0..1.0);
                        [c.acos(), rng.gen_range(-3.1..3.1)]
                    })
                    .collect()
            })
            .collect()
    };

    let per_seed: Vec<Vec<PeriodicOrbit>> = seeds
        .into_par_iter()
        .map(|z0| -> Vec<PeriodicOrbit> {
            let mut found = Vec::new();
            let (z, energy, t_floor) = match window {
                SearchWindow::Energy(e) => match project_to_shell(h, z0, e) {
                    Some(z) => (z, Some(e), 0.0),
                    None => return found,
                },
                SearchWindow::PeriodRange(t_min, _) => (z0, None, t_min * 0.8),
            };
            let s0 = state_of(&z);
            let returns = match near_return_times(h, &s0, cfg, t_floor) {
                Ok(r) => r,
                Err(_) => return found,
            };
            for t in returns {
                if let SearchWindow::PeriodRange(_, t_max) = window {
                    if t > t_max * 1.2 {
                        continue;
                    }
                }
                match polish(h, z.clone(), t, energy, cfg) {
                    Ok((state, period)) => {
                        if let SearchWindow::PeriodRange(t_min, t_max) = window {
                            if period < t_min || period > t_max {
                                continue;
                            }
                        }
                        if let Ok(orbit) = build_orbit(h, state, period) {
                            found.push(orbit);
                        }
                    }
                    Err(_) => continue,
                }
            }
            found
        })
        .collect();

    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for cand in per_seed.into_iter().flatten() {
        if !orbits.iter().any(|o| {
            o.repetitions == cand.repetitions && is_duplicate(h, o, &cand)
        }) {
            orbits.push(cand);
        }
    }
    orbits.sort_by(|a, b| a.primitive_period.total_cmp(&b.primitive_period));
    Ok(orbits)
}

/// Monodromy of an arbitrary closed (state, period) pair.
pub fn monodromy(
    h: &ClassicalHamiltonian,
    initial: &ClassicalState,
    period: f64,
) -> Result<CMat> {
    let opts = EvolveOptions { rtol: 1e-11, with_tangent: true, ..Default::default() };
    let seg = evolve(h, initial, 0.0, period, &opts)?;
    let mut m = seg.monodromy.unwrap();
    close_loop_frame(&mut m, &seg.final_state, &initial.charts());
    let res = symplecticity_residual(&m);
    if res > 1e-6 {
        return Err(SpinError::SingularBlock(format!(
            "monodromy symplecticity residual {res:.2e}"
        )));
    }
    Ok(m)
}

/// Continue the orbit family through `orbit` to a nearby energy shell.
pub fn continue_orbit(
    h: &ClassicalHamiltonian,
    orbit: &PeriodicOrbit,
    e_new: f64,
) -> Result<PeriodicOrbit> {
    let cfg = OrbitSearchConfig::default();
    let z0 = angles_of(&orbit.initial);
    let (state, period) = polish(h, z0, orbit.period, Some(e_new), &cfg)
        .map_err(|err| SpinError::ContinuationFailed(format!("E={e_new}: {err}")))?;
    let mut o = build_orbit(h, state, period)?;
    // Preserve the repetition labelling of the parent orbit.
    if o.repetitions != orbit.repetitions && orbit.repetitions > 1 {
        o.primitive_period = o.period / orbit.repetitions as f64;
        o.repetitions = orbit.repetitions;
    }
    Ok(o)
}

/// dT/dE of the orbit family through `orbit`, by Richardson-extrapolated
/// central differences over Newton-continued neighbours.
pub fn dt_de(h: &ClassicalHamiltonian, orbit: &PeriodicOrbit, delta_e: f64) -> Result<f64> {
    let cfg = OrbitSearchConfig::default();
    let z0 = angles_of(&orbit.initial);
    let period_at = |e: f64| -> Result<f64> {
        let (_, t) = polish(h, z0.clone(), orbit.period, Some(e), &cfg)
            .map_err(|err| SpinError::ContinuationFailed(format!("E={e}: {err}")))?;
        Ok(t)
    };
    let slope = |d: f64| -> Result<f64> {
        Ok((period_at(orbit.energy + d)? - period_at(orbit.energy - d)?) / (2.0 * d))
    };
    let k1 = slope(delta_e)?;
    let k2 = slope(delta_e / 2.0)?;
    Ok((4.0 * k2 - k1) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ModelContext;
    use crate::hamiltonian::SpinComponent::{X, Z};
    use crate::hamiltonian::{HamiltonianSpec, Term};
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::Determinant;
    use std::f64::consts::PI;

    /// H = J_class n3^2 / 2: precession with angular velocity n3,
    /// so T(E) = 2 pi / sqrt(2 E / J_class).
    fn quadratic_model() -> (ModelContext, ClassicalHamiltonian) {
        let ctx = ModelContext::new(1, 20, 1.0).unwrap();
        let spec = HamiltonianSpec::monomial(0.5 / ctx.j_class(), vec![(0, Z), (0, Z)]);
        let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
        (ctx, h)
    }

    #[test]
    fn quadratic_one_dof_orbit_and_dt_de() {
        let (ctx, h) = quadratic_model();
        let e = ctx.j_class() / 8.0; // n3 = 1/2
        let cfg = OrbitSearchConfig { n_seeds: 8, t_search: 30.0, ..Default::default() };
        let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e), &cfg).unwrap();
        assert!(!orbits.is_empty());
        let o = &orbits[0];
        assert_abs_diff_eq!(o.primitive_period, 4.0 * PI, epsilon = 1e-6);
        assert_abs_diff_eq!(o.energy, e, epsilon = 1e-9);
        // Latitude n3 = 1/2.
        assert!((o.initial.real_unit_vectors()[0][2].abs() - 0.5).abs() < 1e-7);

        // T(E) = 2 pi sqrt(J/(2E)): k = dT/dE = -T/(2E).
        let k = dt_de(&h, o, 1e-3 * e).unwrap();
        let k_exact = -o.primitive_period / (2.0 * e);
        assert!((k - k_exact).abs() / k_exact.abs() < 1e-5, "k={k}, exact={k_exact}");
        assert!(k < 0.0);
    }

    #[test]
    fn linear_precession_family_is_degenerate_and_isochronous() {
        let ctx = ModelContext::new(1, 10, 1.0).unwrap();
        let omega = 0.9;
        let h = ClassicalHamiltonian::new(&HamiltonianSpec::monomial(omega, vec![(0, Z)]), &ctx)
            .unwrap();
        let e = 0.3 * ctx.j_class();
        let cfg = OrbitSearchConfig { n_seeds: 6, t_search: 20.0, ..Default::default() };
        let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e), &cfg).unwrap();
        assert!(!orbits.is_empty());
        let o = &orbits[0];
        assert_abs_diff_eq!(o.primitive_period, 2.0 * PI / omega, epsilon = 1e-7);
        assert!(o.degenerate_family);
        let k = dt_de(&h, o, 1e-3 * e).unwrap();
        assert!(k.abs() < 1e-6);
    }

    #[test]
    fn repetition_window_returns_doubled_orbit() {
        let (ctx, h) = quadratic_model();
        let e = ctx.j_class() / 8.0;
        let t_p = 4.0 * PI;
        let cfg = OrbitSearchConfig { n_seeds: 8, t_search: 2.4 * t_p, ..Default::default() };
        let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e), &cfg).unwrap();
        let doubled = orbits.iter().find(|o| o.repetitions == 2);
        assert!(doubled.is_some(), "no r=2 orbit among {} found", orbits.len());
        let o = doubled.unwrap();
        assert_abs_diff_eq!(o.primitive_period, t_p, epsilon = 1e-6);
        assert_abs_diff_eq!(o.period, 2.0 * t_p, epsilon = 1e-5);
        // Action additivity against the r=1 orbit.
        if let Some(single) = orbits.iter().find(|q| q.repetitions == 1) {
            assert!((o.action - 2.0 * single.action).abs() / o.action.abs() < 1e-8);
        }
    }

    fn coupled_model() -> (ModelContext, ClassicalHamiltonian) {
        let ctx = ModelContext::new(2, 10, 1.0).unwrap();
        let jc = ctx.j_class();
        let spec = HamiltonianSpec::new(vec![
            Term::new(0.9, vec![(0, Z)]),
            Term::new(0.9, vec![(1, Z)]),
            Term::new(0.45 / jc, vec![(0, X), (1, X)]),
        ]);
        let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
        (ctx, h)
    }

    #[test]
    fn coupled_orbit_properties() {
        let (ctx, h) = coupled_model();
        let e = 0.4 * ctx.j_class();
        let cfg = OrbitSearchConfig { n_seeds: 48, t_search: 25.0, ..Default::default() };
        let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e), &cfg).unwrap();
        assert!(!orbits.is_empty(), "no orbits found on shell");
        for o in orbits.iter().take(3) {
            // Closure at tighter tolerance.
            let opts = EvolveOptions { rtol: 1e-12, ..Default::default() };
            let seg = evolve(&h, &o.initial, 0.0, o.period, &opts).unwrap();
            assert!(seg.final_state.sphere_distance(&o.initial) < 1e-7);
            // Symplectic monodromy with a unit eigenvalue pair.
            assert!(symplecticity_residual(&o.monodromy) < 1e-6);
            let id = eye(4);
            let det = (&o.monodromy - &id).det().unwrap();
            assert!(det.norm() < 1e-6, "det(M-1) = {det}");
            // Real action.
            let seg = evolve(
                &h,
                &o.initial,
                0.0,
                o.period,
                &EvolveOptions { with_action: true, ..Default::default() },
            )
            .unwrap();
            assert!(seg.bulk_action.unwrap().im.abs() < 1e-8);
        }
    }
}
