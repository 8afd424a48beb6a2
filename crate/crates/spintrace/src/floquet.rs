//! Periodically driven (kicked) chains: exact Floquet operator, classical
//! stroboscopic map with periodic points, the driven trace formula and the
//! eigenphase density.
//!
//! Conventions pinned here: the kick acts after the smooth evolution, with
//! unit kick duration, so F = exp(-i H1/hbar) exp(-i H0 t0/hbar) and the
//! classical map is the H0 flow over t0 followed by the H1 flow over 1.

use rayon::prelude::*;

use crate::chart::Chart;
use crate::classical::{
    evolve_gauged, ClassicalHamiltonian, ClassicalState, EvolveOptions, tangent_flow,
};
use crate::classical::tangent::close_loop_frame;
use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use crate::hamiltonian::HamiltonianSpec;
use crate::linalg::{det, eig, expm, max_norm, symplecticity_residual};
use crate::quantum::{build_hamiltonian, SpectralDensity};
use crate::{C64, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A kicked chain: smooth part H0, kick part H1, drive period t0.
#[derive(Debug, Clone)]
pub struct DrivenModel {
    pub h0: HamiltonianSpec,
    pub h1: HamiltonianSpec,
    pub t0: f64,
}

impl DrivenModel {
    pub fn new(h0: HamiltonianSpec, h1: HamiltonianSpec, t0: f64) -> Result<Self> {
        if !(t0 > 0.0) {
            return Err(SpinError::InvalidInput("drive period must be positive".into()));
        }
        Ok(DrivenModel { h0, h1, t0 })
    }
}

/// Exact Floquet operator F = exp(-i H1/hbar) exp(-i H0 t0/hbar).
pub fn build_floquet(model: &DrivenModel, ctx: &ModelContext) -> Result<CMat> {
    ctx.check_dimension()?;
    let h0 = build_hamiltonian(&model.h0, ctx)?;
    let h1 = build_hamiltonian(&model.h1, ctx)?;
    let phase0 = h0.mapv(|z| z * C64::new(0.0, -model.t0 / ctx.hbar));
    let phase1 = h1.mapv(|z| z * C64::new(0.0, -1.0 / ctx.hbar));
    Ok(expm(&phase1).dot(&expm(&phase0)))
}

/// Max-norm residual of F^dagger F - 1.
pub fn unitarity_residual(f: &CMat) -> f64 {
    let fd = f.t().mapv(|z| z.conj());
    let prod = fd.dot(f);
    max_norm(&(&prod - &CMat::eye(f.nrows())))
}

/// Eigenphases of F mapped to [0, 2 pi), ascending.
pub fn eigenphases(f: &CMat) -> Result<Vec<f64>> {
    let (lambdas, _) = eig(f)?;
    let mut phases: Vec<f64> = lambdas
        .iter()
        .map(|l| {
            let a = l.arg();
            if a < 0.0 { a + 2.0 * std::f64::consts::PI } else { a }
        })
        .collect();
    phases.sort_by(|a, b| a.total_cmp(b));
    Ok(phases)
}

/// Tr F^n for n = 1..=n_max by successive multiplication.
pub fn floquet_traces(f: &CMat, n_max: u32) -> Vec<C64> {
    let mut traces = Vec::with_capacity(n_max as usize);
    let mut power = f.clone();
    for n in 1..=n_max {
        traces.push(power.diag().sum());
        if n < n_max {
            power = power.dot(f);
        }
    }
    traces
}

/// Smoothed eigenphase density (1/dim) sum_n delta_sigma(theta - theta_n),
/// periodized on the circle.
pub fn eigenphase_density(phases: &[f64], dim: f64, grid: &[f64], sigma: f64) -> SpectralDensity {
    let norm = 1.0 / (dim * sigma * (2.0 * std::f64::consts::PI).sqrt());
    let two_pi = 2.0 * std::f64::consts::PI;
    let values = grid
        .iter()
        .map(|&theta| {
            let mut acc = 0.0;
            for &p in phases {
                for k in -2i32..=2 {
                    let d = theta - p + two_pi * k as f64;
                    acc += (-0.5 * (d / sigma).powi(2)).exp();
                }
            }
            acc * norm
        })
        .collect();
    SpectralDensity { grid: grid.to_vec(), values }
}

/// Periodic-orbit form of the eigenphase density,
/// rho(theta) = 1/(2 pi) + (1/(dim pi)) Re sum_n e^{i n theta} Tr K(n t0),
/// truncated at the length of `traces`.
pub fn eigenphase_density_po(traces: &[C64], dim: f64, grid: &[f64]) -> SpectralDensity {
    let values = grid
        .iter()
        .map(|&theta| {
            let mut acc = C64::new(0.0, 0.0);
            for (idx, tr) in traces.iter().enumerate() {
                let n = (idx + 1) as f64;
                acc += C64::from_polar(1.0, n * theta) * tr;
            }
            1.0 / (2.0 * std::f64::consts::PI) + acc.re / (dim * std::f64::consts::PI)
        })
        .collect();
    SpectralDensity { grid: grid.to_vec(), values }
}

/// Classical limit of a driven model: the two Hamilton functions and t0.
pub struct ClassicalDriven {
    pub h0: ClassicalHamiltonian,
    pub h1: ClassicalHamiltonian,
    pub t0: f64,
}

struct StepRecord {
    final_state: ClassicalState,
    jacobian: CMat,
    action: C64,
    /// Global times with the composed tangent matrix, for branch tracking.
    samples: Vec<(f64, CMat)>,
    chart_switches: usize,
}

impl ClassicalDriven {
    pub fn new(model: &DrivenModel, ctx: &ModelContext) -> Result<Self> {
        Ok(ClassicalDriven {
            h0: ClassicalHamiltonian::new(&model.h0, ctx)?,
            h1: ClassicalHamiltonian::new(&model.h1, ctx)?,
            t0: model.t0,
        })
    }

    fn n_sites(&self) -> usize {
        self.h0.n_sites
    }

    /// One drive period with tangent and action accumulation. `gauge` is the
    /// chart of the orbit's saddle point per site; `m_prefix` the tangent
    /// accumulated before this period.
    fn step_full(
        &self,
        state: &ClassicalState,
        gauge: &[Chart],
        m_prefix: &CMat,
        t_start: f64,
        record: bool,
        h_div: f64,
    ) -> Result<StepRecord> {
        let mut samples = Vec::new();
        let mut action = C64::new(0.0, 0.0);
        let mut m_acc = m_prefix.clone();
        let mut chart_switches = 0;
        let mut current = state.clone();
        let mut t_global = t_start;
        for (h, duration) in [(&self.h0, self.t0), (&self.h1, 1.0)] {
            let opts = EvolveOptions {
                with_action: true,
                with_tangent: true,
                record_tangents: record,
                h_max: duration / h_div,
                ..EvolveOptions::default()
            };
            let seg = evolve_gauged(h, &current, 0.0, duration, &opts, gauge)?;
            if record {
                for ((t, m), state) in seg.times.iter().zip(&seg.tangents).zip(&seg.states) {
                    // Keep every sample in the gauge frame so branch tracking
                    // of det(M(t)-1) stays continuous across chart switches.
                    let mut ms = m.dot(&m_acc);
                    close_loop_frame(&mut ms, state, gauge);
                    samples.push((t_global + t, ms));
                }
            }
            action += seg.bulk_action.expect("action requested");
            m_acc = seg.monodromy.as_ref().expect("tangent requested").dot(&m_acc);
            chart_switches += seg.chart_switches;
            current = seg.final_state;
            t_global += duration;
        }
        Ok(StepRecord { final_state: current, jacobian: m_acc, action, samples, chart_switches })
    }

    /// The stroboscopic map and its Jacobian in canonical deviations.
    pub fn stroboscopic_map(&self, state: &ClassicalState) -> Result<(ClassicalState, CMat)> {
        let gauge = state.charts();
        let eye = CMat::eye(2 * self.n_sites());
        let rec = self.step_full(state, &gauge, &eye, 0.0, false, 24.0)?;
        Ok((rec.final_state, rec.jacobian))
    }

    /// Map without tangent accumulation (cheaper, for Newton residuals).
    pub fn map_point(&self, state: &ClassicalState) -> Result<ClassicalState> {
        let mut current = state.clone();
        for (h, duration) in [(&self.h0, self.t0), (&self.h1, 1.0)] {
            let opts = EvolveOptions { rtol: 1e-11, ..EvolveOptions::default() };
            current = evolve_gauged(h, &current, 0.0, duration, &opts, &state.charts())?.final_state;
        }
        Ok(current)
    }
}

/// A periodic point of the n-fold stroboscopic map.
#[derive(Debug, Clone)]
pub struct MapOrbit {
    pub initial: ClassicalState,
    /// States at the start of each of the n periods.
    pub points: Vec<ClassicalState>,
    pub n: u32,
    /// Discrete primitive period.
    pub n_p: u32,
    pub repetitions: u32,
    /// Action S(n t0) in the saddle gauge of the initial point.
    pub action: C64,
    pub monodromy: CMat,
    pub det_m_minus_one: C64,
    /// Maslov phase G from branch tracking along the composed flow.
    pub maslov: f64,
    pub chart_switches: usize,
}

impl MapOrbit {
    /// Orbits too close to a bifurcation are excluded from trace sums.
    pub fn near_unit(&self) -> bool {
        self.det_m_minus_one.norm() < 1e-10
    }
}

#[derive(Debug, Clone)]
pub struct MapSearchConfig {
    pub n_seeds: usize,
    pub rng_seed: u64,
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub dedup_distance: f64,
}

impl Default for MapSearchConfig {
    fn default() -> Self {
        MapSearchConfig {
            n_seeds: 64,
            rng_seed: 1,
            newton_tol: 1e-10,
            max_iterations: 40,
            dedup_distance: 1e-5,
        }
    }
}

fn state_of(z: &[f64]) -> ClassicalState {
    let angles: Vec<(f64, f64)> = z.chunks(2).map(|c| (c[0], c[1])).collect();
    ClassicalState::from_angles(&angles)
}

fn map_residual(driven: &ClassicalDriven, z: &[f64], n: u32) -> Result<Vec<f64>> {
    let s0 = state_of(z);
    let mut s = s0.clone();
    for _ in 0..n {
        s = driven.map_point(&s)?;
    }
    let n0 = s0.real_unit_vectors();
    let n1 = s.real_unit_vectors();
    let mut r = Vec::with_capacity(3 * n0.len());
    for (a, b) in n0.iter().zip(&n1) {
        for c in 0..3 {
            r.push(b[c] - a[c]);
        }
    }
    Ok(r)
}

fn polish_map(
    driven: &ClassicalDriven,
    mut z: Vec<f64>,
    n: u32,
    cfg: &MapSearchConfig,
) -> Result<ClassicalState> {
    use crate::linalg::lstsq_real;
    use ndarray::{Array1, Array2};
    let mut r = map_residual(driven, &z, n)?;
    for it in 0..cfg.max_iterations {
        let rn = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if rn < cfg.newton_tol {
            return Ok(state_of(&z));
        }
        let mut jac = Array2::<f64>::zeros((r.len(), z.len()));
        for col in 0..z.len() {
            let step = 1e-6;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[col] += step;
            zm[col] -= step;
            let rp = map_residual(driven, &zp, n)?;
            let rm = map_residual(driven, &zm, n)?;
            for i in 0..r.len() {
                jac[(i, col)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let b = Array1::from_iter(r.iter().map(|x| -x));
        let delta = lstsq_real(&jac, &b)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let zt: Vec<f64> =
                z.iter().enumerate().map(|(i, zi)| zi + lambda * delta[i]).collect();
            if let Ok(rt) = map_residual(driven, &zt, n) {
                let rtn = rt.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if rtn < rn || it == 0 {
                    z = zt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if rn < 1e-8 {
                return Ok(state_of(&z));
            }
            return Err(SpinError::NoConvergence { iterations: it, residual: rn });
        }
    }
    let rn = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if rn < cfg.newton_tol {
        Ok(state_of(&z))
    } else {
        Err(SpinError::NoConvergence { iterations: cfg.max_iterations, residual: rn })
    }
}

/// Signed count of rotation senses in the vv block of the tangent generator at
/// t = 0+, fixing the branch of det^{-1/2}(-M_bb(0)) per degree of freedom.
fn initial_winding_sign(driven: &ClassicalDriven, state: &ClassicalState) -> Result<f64> {
    let derivs = driven.h0.derivatives(state)?;
    let g = tangent_flow(&driven.h0, state, &derivs);
    let n = driven.n_sites();
    let mut gvv = CMat::zeros((n, n));
    for i in 0..n {
        for k in 0..n {
            gvv[(i, k)] = g[(n + i, n + k)];
        }
    }
    if n == 1 {
        return Ok(gvv[(0, 0)].im.signum());
    }
    let (lambdas, _) = eig(&gvv)?;
    Ok(lambdas.iter().map(|l| l.im.signum()).sum())
}

/// Build the full orbit record from a converged periodic point.
/// Largest principal-value phase step of det(M(t) - 1) between consecutive
/// samples; used to decide whether the branch tracking is resolved.
fn max_arg_step(samples: &[(f64, CMat)], dim: usize) -> f64 {
    let mut worst = 0.0f64;
    let mut prev: Option<f64> = None;
    for (_, mt) in samples {
        let g = det(&(mt - &CMat::eye(dim)));
        if g.norm() < 1e-13 {
            continue;
        }
        let a = g.arg();
        if let Some(p) = prev {
            let mut d = a - p;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            worst = worst.max(d.abs());
        }
        prev = Some(a);
    }
    worst
}

fn build_map_orbit(driven: &ClassicalDriven, initial: ClassicalState, n: u32) -> Result<MapOrbit> {
    let gauge = initial.charts();
    let dim = 2 * driven.n_sites();
    let period = driven.t0 + 1.0;

    // Branch tracking of arg det(M(t) - 1) needs samples dense enough that the
    // phase never jumps by more than ~1 rad between neighbours; otherwise the
    // unwrap aliases near zeros of det(M(t) - 1) and the Maslov index picks up
    // spurious multiples of pi.  Refine the sampling until the tracking is
    // manifestly resolved.
    let mut points = Vec::with_capacity(n as usize);
    let mut m = CMat::eye(dim);
    let mut action = C64::new(0.0, 0.0);
    let mut samples: Vec<(f64, CMat)> = Vec::new();
    let mut chart_switches = 0;
    let mut current = initial.clone();
    for &h_div in &[24.0, 96.0, 384.0, 1536.0, 6144.0, 24576.0] {
        points.clear();
        samples.clear();
        m = CMat::eye(dim);
        action = C64::new(0.0, 0.0);
        chart_switches = 0;
        current = initial.clone();
        for step in 0..n {
            points.push(current.clone());
            let rec =
                driven.step_full(&current, &gauge, &m, step as f64 * period, true, h_div)?;
            action += rec.action;
            samples.extend(rec.samples);
            chart_switches += rec.chart_switches;
            m = rec.jacobian;
            current = rec.final_state;
        }
        if max_arg_step(&samples, dim) < 1.0 {
            break;
        }
    }
    // The composed Jacobian maps gauge-frame deviations into the final
    // charts; close the loop frame before any determinant is taken.
    close_loop_frame(&mut m, &current, &gauge);
    if current.sphere_distance(&initial) > 1e-8 {
        return Err(SpinError::NoConvergence {
            iterations: n as usize,
            residual: current.sphere_distance(&initial),
        });
    }
    let res = symplecticity_residual(&m);
    if res > 1e-6 {
        return Err(SpinError::SingularBlock(format!(
            "map monodromy symplecticity residual {res:.2e}"
        )));
    }

    // Discrete primitive period: smallest divisor d of n with map^d closing.
    let mut n_p = n;
    for d in 1..n {
        if n % d == 0 && points.len() > d as usize {
            let mut s = points[0].clone();
            for _ in 0..d {
                s = driven.map_point(&s)?;
            }
            if s.sphere_distance(&points[0]) < 1e-6 {
                n_p = d;
                break;
            }
        }
    }

    // Branch tracking of det(M(t) - 1) along the composed flow; the starting
    // branch per degree of freedom is fixed by the initial rotation sense.
    let mut phi = 0.0;
    let mut prev: Option<f64> = None;
    for (_, mt) in &samples {
        let g = det(&(mt - &CMat::eye(dim)));
        if g.norm() < 1e-13 {
            continue;
        }
        let a = g.arg();
        match prev {
            None => {
                phi = a;
                prev = Some(a);
            }
            Some(p) => {
                let mut d = a - p;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                phi += d;
                prev = Some(a);
            }
        }
    }
    let sign = initial_winding_sign(driven, &initial)?;
    let maslov = -0.5 * (phi + std::f64::consts::PI * sign);

    let det_m_minus_one = det(&(&m - &CMat::eye(dim)));
    Ok(MapOrbit {
        initial,
        points,
        n,
        n_p,
        repetitions: n / n_p,
        action,
        monodromy: m,
        det_m_minus_one,
        maslov,
        chart_switches,
    })
}

fn is_duplicate_map(a: &MapOrbit, b: &MapOrbit, tol: f64) -> bool {
    if a.n != b.n {
        return false;
    }
    let n = a.points.len();
    (0..n).any(|shift| {
        (0..n).all(|k| a.points[k].sphere_distance(&b.points[(k + shift) % n]) < tol)
    })
}

/// Search for periodic points of the n-fold stroboscopic map from random
/// seeds on the sphere.
pub fn find_map_orbits(
    driven: &ClassicalDriven,
    n: u32,
    cfg: &MapSearchConfig,
) -> Result<Vec<MapOrbit>> {
    let n_sites = driven.n_sites();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let seeds: Vec<Vec<f64>> = (0..cfg.n_seeds)
        .map(|_| {
            (0..n_sites)
                .flat_map(|_| {
                    let cos_t: f64 = rng.gen_range(-0.95..0.95);
                    let theta = cos_t.acos();
                    let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    [theta, phi]
                })
                .collect()
        })
        .collect();

    let candidates: Vec<MapOrbit> = seeds
        .into_par_iter()
        .filter_map(|z| {
            let state = polish_map(driven, z, n, cfg).ok()?;
            build_map_orbit(driven, state, n).ok()
        })
        .collect();

    let mut orbits: Vec<MapOrbit> = Vec::new();
    for cand in candidates {
        if !orbits.iter().any(|o| is_duplicate_map(o, &cand, cfg.dedup_distance)) {
            orbits.push(cand);
        }
    }
    orbits.sort_by(|a, b| a.action.re.total_cmp(&b.action.re));
    Ok(orbits)
}

/// Driven trace formula: Tr K(n t0) = sum_orbits n_P / sqrt|det(M-1)| *
/// exp(i S/hbar + i G). Orbits with a near-unit eigenvalue are skipped.
pub fn trace_f_semiclassical(orbits: &[MapOrbit], hbar: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for o in orbits {
        if o.near_unit() {
            continue;
        }
        let amp = o.n_p as f64 / o.det_m_minus_one.norm().sqrt();
        let phase = o.action / hbar + C64::new(o.maslov, 0.0);
        acc += C64::from_polar(amp, 0.0) * (C64::new(0.0, 1.0) * phase).exp();
    }
    acc
}
