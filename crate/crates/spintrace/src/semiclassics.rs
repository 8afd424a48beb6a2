//! Trace-formula engine: Hessian/monodromy algebra, the generalized
//! eigensystem reduction, Maslov branch tracking, the semiclassical
//! propagator trace and the energy-domain periodic-orbit density.

use ndarray::{Array1, s};

use crate::classical::tangent::close_loop_frame;
use crate::classical::{ClassicalHamiltonian, ClassicalState, EvolveOptions, evolve};
use crate::error::{Result, SpinError};
use crate::linalg::{det, eye, inv, lstsq_complex, symplectic_product, symplecticity_residual};
use crate::orbits::{PeriodicOrbit, continue_orbit};
use crate::quantum::SpectralDensity;
use crate::{C64, CMat, CVec};

fn blocks(m: &CMat) -> (CMat, CMat, CMat, CMat) {
    let n = m.nrows() / 2;
    (
        m.slice(s![..n, ..n]).to_owned(),
        m.slice(s![..n, n..]).to_owned(),
        m.slice(s![n.., ..n]).to_owned(),
        m.slice(s![n.., n..]).to_owned(),
    )
}

/// Hessian H_F of the closed-orbit generating function, from the monodromy
/// blocks: H_F = [[M_bb^-1 M_ba, 1 - M_bb^-1], [1 + M_ab M_bb^-1 M_ba - M_aa,
/// -M_ab M_bb^-1]].
pub fn hessian_from_monodromy(m: &CMat) -> Result<CMat> {
    let n = m.nrows() / 2;
    let (maa, mab, mba, mbb) = blocks(m);
    let mbb_inv = inv(&mbb)?;
    let id = eye(n);
    let top_left = mbb_inv.dot(&mba);
    let top_right = &id - &mbb_inv;
    let bottom_left = &id + &mab.dot(&mbb_inv).dot(&mba) - &maa;
    let bottom_right = -mab.dot(&mbb_inv);
    let mut h = CMat::zeros((2 * n, 2 * n));
    h.slice_mut(s![..n, ..n]).assign(&top_left);
    h.slice_mut(s![..n, n..]).assign(&top_right);
    h.slice_mut(s![n.., ..n]).assign(&bottom_left);
    h.slice_mut(s![n.., n..]).assign(&bottom_right);
    Ok(h)
}

/// Max deviation of a matrix from symmetry (plain transpose).
pub fn symmetry_residual(h: &CMat) -> f64 {
    let ht = h.t();
    (h - &ht).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse of [`hessian_from_monodromy`]: M = [[1 - H_ab^T - H_bb Z H_aa,
/// -H_bb Z], [Z H_aa, Z]] with Z = (1 - H_ab)^-1.
pub fn monodromy_from_hessian(h: &CMat) -> Result<CMat> {
    let n = h.nrows() / 2;
    let (haa, hab, _, hbb) = blocks(h);
    let id = eye(n);
    let z = inv(&(&id - &hab))?;
    let mut m = CMat::zeros((2 * n, 2 * n));
    m.slice_mut(s![..n, ..n])
        .assign(&(&id - &hab.t().to_owned() - &hbb.dot(&z).dot(&haa)));
    m.slice_mut(s![..n, n..]).assign(&(-hbb.dot(&z)));
    m.slice_mut(s![n.., ..n]).assign(&z.dot(&haa));
    m.slice_mut(s![n.., n..]).assign(&z);
    Ok(m)
}

/// The A and D diagonal matrices of the boundary-term Hessian at the orbit
/// point s (real state): D = -diag(2iJ s_i^2/(1+|s_i|^2)^2), A = -B^-2 D*.
pub fn boundary_blocks(state: &ClassicalState, j_class: f64) -> (CVec, CVec) {
    let two_ij = C64::new(0.0, 2.0 * j_class);
    let mut a = Vec::new();
    let mut d = Vec::new();
    for site in &state.sites {
        let s = site.u;
        let denom = 1.0 + s.norm_sqr();
        let b_i = two_ij / C64::new(denom * denom, 0.0);
        let d_i = -two_ij * s * s / (denom * denom);
        a.push(-d_i.conj() / (b_i * b_i));
        d.push(d_i);
    }
    (Array1::from(a), Array1::from(d))
}

/// H_S and H_F of the action and the stationary functional, related by
/// H_F = H_S + [[A, 1], [1, D]].
#[derive(Debug, Clone)]
pub struct HessianPair {
    pub h_s: CMat,
    pub h_f: CMat,
}

pub fn hessian_pair(m: &CMat, state: &ClassicalState, j_class: f64) -> Result<HessianPair> {
    let n = m.nrows() / 2;
    let h_f = hessian_from_monodromy(m)?;
    let (a, d) = boundary_blocks(state, j_class);
    let mut h_s = h_f.clone();
    for i in 0..n {
        h_s[(i, i)] -= a[i];
        h_s[(n + i, n + i)] -= d[i];
        h_s[(i, n + i)] -= 1.0;
        h_s[(n + i, i)] -= 1.0;
    }
    Ok(HessianPair { h_s, h_f })
}

/// Relative residual of det M_bb * det H_F = det(M - 1).
pub fn three_dets_check(m: &CMat) -> Result<f64> {
    let (_, _, _, mbb) = blocks(m);
    let h_f = hessian_from_monodromy(m)?;
    let lhs = det(&mbb) * det(&h_f);
    let rhs = det(&(m - &eye(m.nrows())));
    Ok((lhs - rhs).norm() / rhs.norm().max(1.0))
}

/// Residual of the symplectic invariance of det M_bb * det H_F under
/// conjugation M -> W M W^-1.
pub fn symplectic_invariance_check(m: &CMat, w: &CMat) -> Result<f64> {
    let product = |m: &CMat| -> Result<C64> {
        let (_, _, _, mbb) = blocks(m);
        Ok(det(&mbb) * det(&hessian_from_monodromy(m)?))
    };
    let conj = w.dot(m).dot(&inv(w)?);
    let p0 = product(m)?;
    let p1 = product(&conj)?;
    Ok((p0 - p1).norm() / p0.norm().max(1.0))
}

/// Monodromy in the (δt, δξ; δE, δπ) variables, with the time and energy
/// directions split off.
#[derive(Debug, Clone)]
pub struct ReducedMonodromy {
    /// Stable stability eigenvalues Λ_n, |Λ_n| ≤ 1, n = 1..N-1.
    pub lambdas: Vec<C64>,
    /// k = dT/dE read off the m_ab block.
    pub k: f64,
    /// Transformed monodromy W^-1 M W.
    pub m: CMat,
    /// Stability part with the δt and δE rows/columns removed.
    pub m_red: CMat,
    /// The symplectic transformation; columns are (e_t, ξ_n, e_E, π_n).
    pub w: CMat,
    /// True when some stability pair lies on the unit circle.
    pub elliptic: bool,
}

impl ReducedMonodromy {
    /// det(m_red - 1) = prod_n (2 - Λ_n - 1/Λ_n); 1 for N = 1.
    pub fn det_m_red_minus_one(&self) -> C64 {
        self.lambdas
            .iter()
            .map(|l| C64::new(2.0, 0.0) - l - 1.0 / l)
            .product()
    }

    /// Stability amplitude |det(m_red - 1)|^{-1/2}.
    pub fn amplitude(&self) -> f64 {
        1.0 / self.det_m_red_minus_one().norm().sqrt()
    }
}

/// Flow tangent at a state in canonical deviation coordinates,
/// e_t = (H_v, -k H_u).
fn flow_tangent(h: &ClassicalHamiltonian, state: &ClassicalState) -> Result<CVec> {
    let d = h.derivatives(state)?;
    let k = crate::classical::tangent::k_factors(state, h.j_class);
    let n = h.n_sites;
    let mut e = CVec::zeros(2 * n);
    for i in 0..n {
        e[i] = d.dv[i];
        e[n + i] = -k[i] * d.du[i];
    }
    Ok(e)
}

/// Split the monodromy of an autonomous-flow orbit into the (δt, δE) plane
/// and the stability directions, returning Λ_n, k and m_red.
pub fn generalized_eigensystem(
    h: &ClassicalHamiltonian,
    orbit: &PeriodicOrbit,
) -> Result<ReducedMonodromy> {
    let m = &orbit.monodromy;
    let two_n = m.nrows();
    let n = two_n / 2;

    let e_t = flow_tangent(h, &orbit.initial)?;
    // (M - 1) e_E = -k e_t with e_t in the null space: solve (M - 1) w = -e_t
    // by minimum-norm least squares, then k = 1/omega(e_t, w) and e_E = k w.
    let m_minus = m - &eye(two_n);
    let w_vec = lstsq_complex(&m_minus, &(-&e_t))?;
    let omega_tw = symplectic_product(&e_t, &w_vec);
    if omega_tw.norm() < 1e-12 {
        return Err(SpinError::IsochronousFamily(omega_tw.norm()));
    }
    let k_c = 1.0 / omega_tw;
    if k_c.im.abs() > 1e-4 * k_c.norm().max(1e-12) {
        return Err(SpinError::MissingUnitEigenvalue(k_c.im.abs()));
    }
    let e_e = w_vec.mapv(|x| x * k_c);

    // Stability pairs from the eigendecomposition, excluding the unit pair.
    let (vals, vecs) = crate::linalg::eig(m)?;
    let mut idx: Vec<usize> = (0..two_n).collect();
    idx.sort_by(|&a, &b| (vals[a] - 1.0).norm().total_cmp(&(vals[b] - 1.0).norm()));
    let mut remaining: Vec<usize> = idx[2..].to_vec();
    let mut stable_cols: Vec<CVec> = Vec::new();
    let mut unstable_cols: Vec<CVec> = Vec::new();
    let mut lambdas = Vec::new();
    let mut elliptic = false;
    while let Some(pos) = remaining
        .iter()
        .enumerate()
        .max_by(|a, b| vals[*a.1].norm().total_cmp(&vals[*b.1].norm()))
        .map(|(p, _)| p)
    {
        let iu = remaining.swap_remove(pos);
        let lam_u = vals[iu];
        let (ppos, _) = remaining
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (vals[*a.1] * lam_u - 1.0)
                    .norm()
                    .total_cmp(&(vals[*b.1] * lam_u - 1.0).norm())
            })
            .ok_or_else(|| SpinError::SingularBlock("odd stability pairing".into()))?;
        let is_ = remaining.swap_remove(ppos);
        let lam_s = vals[is_];
        if (lam_u.norm() - 1.0).abs() < 1e-6 {
            elliptic = true;
        }
        let xi = vecs.column(is_).to_owned();
        let mut pi = vecs.column(iu).to_owned();
        let c = symplectic_product(&xi, &pi);
        if c.norm() < 1e-10 {
            return Err(SpinError::SingularBlock(
                "non-diagonalizable stability block".into(),
            ));
        }
        pi.mapv_inplace(|x| x / c);
        lambdas.push(lam_s);
        stable_cols.push(xi);
        unstable_cols.push(pi);
    }

    let mut w = CMat::zeros((two_n, two_n));
    w.column_mut(0).assign(&e_t);
    for (j, xi) in stable_cols.iter().enumerate() {
        w.column_mut(1 + j).assign(xi);
    }
    w.column_mut(n).assign(&e_e);
    for (j, pi) in unstable_cols.iter().enumerate() {
        w.column_mut(n + 1 + j).assign(pi);
    }
    let res = symplecticity_residual(&w);
    if res > 1e-6 {
        return Err(SpinError::SingularBlock(format!(
            "reduction transform symplecticity residual {res:.2e}"
        )));
    }

    let m_block = inv(&w)?.dot(m).dot(&w);
    let keep: Vec<usize> = (0..two_n).filter(|&i| i != 0 && i != n).collect();
    let mut m_red = CMat::zeros((two_n - 2, two_n - 2));
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            m_red[(r, c)] = m_block[(i, j)];
        }
    }

    Ok(ReducedMonodromy {
        lambdas,
        k: k_c.re,
        m: m_block,
        m_red,
        w,
        elliptic,
    })
}

/// Continuously tracked phase and modulus of det M_bb(t) along a trajectory,
/// starting from det M_bb(0) = 1 (phase 0). Each sample is re-expressed in the
/// initial charts before taking the determinant, so the branch refers to one
/// frame throughout and stays continuous across chart switches.
pub fn track_bb_determinant(
    h: &ClassicalHamiltonian,
    initial: &ClassicalState,
    t: f64,
) -> Result<(f64, f64)> {
    let n = h.n_sites;
    let charts = initial.charts();
    let mut h_max = t.abs() / 256.0;
    for _ in 0..4 {
        let opts = EvolveOptions {
            rtol: 1e-10,
            with_tangent: true,
            record_tangents: true,
            h_max,
            ..Default::default()
        };
        let seg = evolve(h, initial, 0.0, t, &opts)?;
        let mut phase = 0.0f64;
        let mut prev = C64::new(1.0, 0.0);
        let mut ok = true;
        let mut modulus = 1.0f64;
        for (m, state) in seg.tangents.iter().zip(&seg.states) {
            let mut ms = m.clone();
            close_loop_frame(&mut ms, state, &charts);
            let mbb = ms.slice(s![n.., n..]).to_owned();
            let d = det(&mbb);
            let step = (d / prev).arg();
            if step.abs() > 1.2 {
                ok = false;
                break;
            }
            phase += step;
            modulus = d.norm();
            prev = d;
        }
        if ok {
            return Ok((phase, modulus));
        }
        h_max /= 4.0;
    }
    Err(SpinError::NoConvergence { iterations: 4, residual: h_max })
}

/// Maslov phase of a closed orbit over the given traversal time: G = -pi w,
/// where w is the integer winding number of det M_bb along the orbit. The
/// fractional part of the tracked phase is cancelled by the phases of the
/// H_F Gaussian integrals and must not enter; rounding extracts the
/// topological winding. Calibrated so a 1-DOF precession orbit has
/// G(T_P) = -pi, reproducing EBK level positions.
pub fn maslov_phase(h: &ClassicalHamiltonian, initial: &ClassicalState, t: f64) -> Result<f64> {
    let (phi, _) = track_bb_determinant(h, initial, t)?;
    let winding = (phi / (2.0 * std::f64::consts::PI)).round();
    Ok(-std::f64::consts::PI * winding)
}

/// One orbit's data entering the time-domain trace sum.
#[derive(Debug, Clone)]
pub struct TraceContribution {
    pub t_primitive: f64,
    pub k: f64,
    pub det_m_red_minus_one: C64,
    pub action: f64,
    pub maslov: f64,
}

/// Semiclassical Tr K(t) = sum_γ t_P/sqrt(-2 i pi ħ k) |det(m_red-1)|^{-1/2}
/// exp(i S/ħ + i G). Isochronous contributions (k = 0) are rejected.
pub fn trace_k_semiclassical(contribs: &[TraceContribution], hbar: f64) -> Result<C64> {
    let mut total = C64::new(0.0, 0.0);
    for c in contribs {
        if c.k.abs() < 1e-12 {
            return Err(SpinError::IsochronousFamily(c.k));
        }
        let root = (C64::new(0.0, -2.0 * std::f64::consts::PI * hbar * c.k)).sqrt();
        let amp = c.t_primitive / root / c.det_m_red_minus_one.norm().sqrt();
        total += amp * (C64::new(0.0, c.action / hbar + c.maslov)).exp();
    }
    Ok(total)
}

/// One energy point of a continued orbit family.
#[derive(Debug, Clone)]
pub struct FamilyPoint {
    pub energy: f64,
    /// Primitive period T_P(E).
    pub period: f64,
    /// Closed-orbit action S(T_P).
    pub action: f64,
    /// Legendre-transformed action: S + E T_P.
    pub legendre_action: f64,
    /// Maslov phase over one primitive traversal.
    pub maslov: f64,
    pub lambdas: Vec<C64>,
    pub k: f64,
}

/// Continue the primitive orbit through `seed` across the energy grid.
/// The grid is walked outward from the seed's energy so each Newton
/// continuation starts from a close neighbour.
pub fn orbit_family(
    h: &ClassicalHamiltonian,
    seed: &PeriodicOrbit,
    e_grid: &[f64],
) -> Result<Vec<FamilyPoint>> {
    let mut order: Vec<usize> = (0..e_grid.len()).collect();
    order.sort_by(|&a, &b| {
        (e_grid[a] - seed.energy)
            .abs()
            .total_cmp(&(e_grid[b] - seed.energy).abs())
    });
    // Walk to the right and to the left of the seed separately.
    let mut points: Vec<Option<FamilyPoint>> = vec![None; e_grid.len()];
    for side in [false, true] {
        let mut current = seed.clone();
        let indices: Vec<usize> = {
            let mut v: Vec<usize> = (0..e_grid.len())
                .filter(|&i| (e_grid[i] >= seed.energy) == side)
                .collect();
            v.sort_by(|&a, &b| {
                (e_grid[a] - seed.energy)
                    .abs()
                    .total_cmp(&(e_grid[b] - seed.energy).abs())
            });
            v
        };
        for i in indices {
            let orbit = continue_orbit(h, &current, e_grid[i])?;
            let red = generalized_eigensystem(h, &orbit)?;
            let t_p = orbit.primitive_period;
            let action = if orbit.repetitions > 1 {
                orbit.action / orbit.repetitions as f64
            } else {
                orbit.action
            };
            let maslov = maslov_phase(h, &orbit.initial, t_p)?;
            points[i] = Some(FamilyPoint {
                energy: e_grid[i],
                period: t_p,
                action,
                legendre_action: action + e_grid[i] * t_p,
                maslov,
                lambdas: red.lambdas.clone(),
                k: red.k,
            });
            current = orbit;
        }
    }
    Ok(points.into_iter().map(|p| p.expect("grid covered")).collect())
}

/// Oscillating density of states from an orbit family on its energy grid:
/// d_osc(E) = (1/pi ħ) sum_r t_P |det(m_red(r)-1)|^{-1/2}
///            cos(r 𝒮/ħ + r G) e^{-sigma^2 (r T)^2 / 2ħ^2}.
/// The Gaussian factor matches a spectrum smoothed with width `sigma`
/// (use sigma = 0 for the bare sum).
pub fn density_osc(
    family: &[FamilyPoint],
    hbar: f64,
    r_max: u32,
    sigma: f64,
) -> SpectralDensity {
    let grid: Vec<f64> = family.iter().map(|p| p.energy).collect();
    let values: Vec<f64> = family
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            for r in 1..=r_max {
                let rf = r as f64;
                let det_r: C64 = p
                    .lambdas
                    .iter()
                    .map(|l| {
                        let lr = l.powf(rf);
                        C64::new(2.0, 0.0) - lr - 1.0 / lr
                    })
                    .product();
                let amp = p.period / det_r.norm().sqrt();
                let damp = if sigma > 0.0 {
                    (-sigma * sigma * (rf * p.period).powi(2) / (2.0 * hbar * hbar)).exp()
                } else {
                    1.0
                };
                acc += amp * damp * (rf * (p.legendre_action / hbar + p.maslov)).cos();
            }
            acc / (std::f64::consts::PI * hbar)
        })
        .collect();
    SpectralDensity { grid, values }
}

/// Semiclassical coherent-state propagator K(U', V'', t) for the single
/// trajectory branch connected to the short-time solution: the boundary-value
/// problem is solved by Newton shooting on the initial V', and the prefactor
/// det^{1/2}((i/2J) ∂²S/∂U'∂V'') = prod_i (1+U'_i V'_i)^{-1} det^{-1/2} M_bb
/// is branch-tracked from t = 0.
pub fn semiclassical_propagator(
    h: &ClassicalHamiltonian,
    ctx_hbar: f64,
    u_prime: &[C64],
    v_dprime: &[C64],
    t: f64,
) -> Result<C64> {
    let n = h.n_sites;
    let shoot = |v_prime: &[C64]| -> Result<Vec<C64>> {
        let s = ClassicalState::complex_from_uv(u_prime, v_prime);
        let seg = evolve(h, &s, 0.0, t, &EvolveOptions { rtol: 1e-12, ..Default::default() })?;
        Ok(seg
            .final_state
            .sites
            .iter()
            .zip(v_dprime)
            .map(|(site, target)| {
                // Compare in physical (standard-chart) coordinates.
                let v_phys = match site.chart {
                    crate::chart::Chart::Standard => site.v,
                    crate::chart::Chart::Inverted => 1.0 / site.v,
                };
                v_phys - target
            })
            .collect())
    };

    let mut v_prime: Vec<C64> = v_dprime.to_vec();
    let mut converged = false;
    for _ in 0..60 {
        let r = shoot(&v_prime)?;
        let rn = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rn < 1e-12 {
            converged = true;
            break;
        }
        // Holomorphic dependence on V' lets a real-step difference supply the
        // full complex Jacobian.
        let eps = 1e-7;
        let mut jac = CMat::zeros((n, n));
        for j in 0..n {
            let mut vp = v_prime.clone();
            vp[j] += C64::new(eps, 0.0);
            let rp = shoot(&vp)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / eps;
            }
        }
        let rhs = CVec::from_iter(r.iter().map(|z| -z));
        let delta = lstsq_complex(&jac, &rhs)?;
        for j in 0..n {
            v_prime[j] += delta[j];
        }
    }
    if !converged {
        let r = shoot(&v_prime)?;
        let rn = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rn > 1e-9 {
            return Err(SpinError::NoConvergence { iterations: 60, residual: rn });
        }
    }

    let s0 = ClassicalState::complex_from_uv(u_prime, &v_prime);
    let seg = evolve(
        h,
        &s0,
        0.0,
        t,
        &EvolveOptions { rtol: 1e-12, with_action: true, ..Default::default() },
    )?;
    let action = crate::classical::action_integral(h, &seg);
    let (phi, modulus) = track_bb_determinant(h, &s0, t)?;

    let mut prefactor = C64::new(1.0, 0.0);
    for i in 0..n {
        prefactor /= C64::new(1.0, 0.0) + u_prime[i] * v_prime[i];
    }
    let det_inv_sqrt = C64::from_polar(1.0 / modulus.sqrt(), -phi / 2.0);
    Ok(prefactor * det_inv_sqrt * (C64::new(0.0, 1.0) * action / ctx_hbar).exp())
}

/// Diagnostic row pairing the exact propagator trace with the windowed
/// spectral Fourier transform whose peaks sit at classical orbit periods.
#[derive(Debug, Clone)]
pub struct TimeDomainRow {
    pub t: f64,
    pub exact_trace: C64,
    /// |sum_n w(E_n) e^{i E_n t / ħ}| with a Hann window over the spectrum.
    pub spectral_peak: f64,
}

pub fn time_domain_compare(
    exact: &crate::quantum::ExactModel,
    t_grid: &[f64],
) -> Result<Vec<TimeDomainRow>> {
    let energies = exact.spectrum();
    let hbar = exact.ctx.hbar;
    let (e_min, e_max) = (energies[0], energies[energies.len() - 1]);
    let span = (e_max - e_min).max(1e-300);
    let weights: Vec<f64> = energies
        .iter()
        .map(|e| {
            let x = (e - e_min) / span;
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * x).cos())
        })
        .collect();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let exact_trace = exact.propagator_trace(t);
            let peak: C64 = energies
                .iter()
                .zip(&weights)
                .map(|(&e, &w)| w * C64::new(0.0, e * t / hbar).exp())
                .sum();
            TimeDomainRow { t, exact_trace, spectral_peak: peak.norm() }
        })
        .collect())
}
