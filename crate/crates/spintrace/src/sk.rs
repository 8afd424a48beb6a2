//! Numerical verification of the Q-symbol expansion h = H + hbar Z + O(hbar^2)
//! and the exact single-site recursion relating the symbols of `H` and
//! `(J_m H + H J_m)/2`. Together these demonstrate the Solari-Kochetov
//! cancellation without replaying the symbolic induction.

use crate::classical::{evolve, ClassicalHamiltonian, EvolveOptions};
use crate::classical::ClassicalState;
use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use crate::hamiltonian::{HamiltonianSpec, SpinComponent};
use crate::quantum::{build_hamiltonian, build_spin_operators, q_symbol, q_symbol_of_matrix};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(hbar) difference between the Q-symbol and the naive Hamilton function:
/// Z = (1/4 J_class) sum_i (1 + u_i v_i)^2 d^2 H / du_i dv_i.
///
/// The combination is chart covariant, so the chart-local Hessian can be
/// used directly on either chart.
pub fn z_correction(h: &ClassicalHamiltonian, state: &ClassicalState) -> Result<C64> {
    let d = h.derivatives(state)?;
    let mut z = C64::new(0.0, 0.0);
    for (i, site) in state.sites.iter().enumerate() {
        let di = C64::new(1.0, 0.0) + site.u * site.v;
        z += di * di * d.hessian.huv[(i, i)];
    }
    Ok(z / C64::new(4.0 * h.j_class, 0.0))
}

/// Integral of Z along the classical trajectory from `initial` over time `t`
/// (the Solari-Kochetov phase correction), by composite trapezoid over the
/// adaptive steps of the integrator.
pub fn sk_integral(h: &ClassicalHamiltonian, initial: &ClassicalState, t: f64) -> Result<C64> {
    let opts = EvolveOptions {
        record_states: true,
        h_max: t.abs() / 64.0,
        ..EvolveOptions::default()
    };
    let seg = evolve(h, initial, 0.0, t, &opts)?;
    let mut acc = C64::new(0.0, 0.0);
    let mut prev: Option<(f64, C64)> = None;
    for (time, state) in seg.times.iter().zip(&seg.states) {
        let z = z_correction(h, state)?;
        if let Some((t0, z0)) = prev {
            acc += (z + z0) * 0.5 * (time - t0);
        }
        prev = Some((*time, z));
    }
    Ok(acc)
}

/// Pointwise comparison of the exact Q-symbol against H + hbar Z.
#[derive(Debug, Clone)]
pub struct SymbolComparison {
    /// Sample points as (u, v) per site.
    pub points: Vec<(Vec<C64>, Vec<C64>)>,
    pub h_exact: Vec<C64>,
    pub h_naive: Vec<C64>,
    pub z: Vec<C64>,
    /// Per-point |h - H - hbar Z|.
    pub residual: Vec<f64>,
}

impl SymbolComparison {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0f64, |m, r| m.max(*r))
    }
}

/// Compare the exact Q-symbol of `spec` with the naive Hamilton function
/// plus the Z correction at the given sample points.
pub fn compare_symbols(
    spec: &HamiltonianSpec,
    ctx: &ModelContext,
    points: &[(Vec<C64>, Vec<C64>)],
) -> Result<SymbolComparison> {
    let classical = ClassicalHamiltonian::new(spec, ctx)?;
    let hbar = ctx.hbar;
    let mut cmp = SymbolComparison {
        points: points.to_vec(),
        h_exact: Vec::with_capacity(points.len()),
        h_naive: Vec::with_capacity(points.len()),
        z: Vec::with_capacity(points.len()),
        residual: Vec::with_capacity(points.len()),
    };
    for (us, vs) in points {
        let state = ClassicalState::complex_from_uv(us, vs);
        for site in &state.sites {
            if site.one_plus_uv_physical().norm() < 0.1 {
                return Err(SpinError::ChartSingularity {
                    site: 0,
                    magnitude: site.one_plus_uv_physical().norm(),
                });
            }
        }
        let exact = q_symbol(spec, us, vs, ctx)?;
        let naive = classical.eval(&state)?;
        let z = z_correction(&classical, &state)?;
        cmp.residual.push((exact - naive - z * hbar).norm());
        cmp.h_exact.push(exact);
        cmp.h_naive.push(naive);
        cmp.z.push(z);
    }
    Ok(cmp)
}

/// Draw real phase-space sample points (v = u*) away from both poles.
pub fn sample_points(n_sites: usize, count: usize, seed: u64) -> Vec<(Vec<C64>, Vec<C64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let us: Vec<C64> = (0..n_sites)
                .map(|_| {
                    let r = 0.2 + 1.6 * rng.gen::<f64>();
                    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                    C64::from_polar(r, phi)
                })
                .collect();
            let vs: Vec<C64> = us.iter().map(|u| u.conj()).collect();
            (us, vs)
        })
        .collect()
}

/// Fit the scaling exponent of max|h - H - hbar Z| against hbar, holding
/// J_class fixed while j runs over `twice_j_list`. Returns the fitted slope;
/// O(hbar^2) remainders give a slope near 2.
pub fn verify_hprime(
    spec: &HamiltonianSpec,
    n_sites: usize,
    j_class: f64,
    twice_j_list: &[u32],
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if twice_j_list.len() < 3 {
        return Err(SpinError::InvalidInput(
            "need at least three j values for a scaling fit".into(),
        ));
    }
    let lo = twice_j_list.iter().min().unwrap();
    let hi = twice_j_list.iter().max().unwrap();
    if (*hi as f64) < 10.0 * (*lo as f64) {
        return Err(SpinError::InvalidInput(
            "j list must span at least one decade".into(),
        ));
    }
    let points = sample_points(n_sites, sample_count, seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &twice_j in twice_j_list {
        let ctx = ModelContext::with_fixed_j_class(n_sites, twice_j, j_class)?;
        let cmp = compare_symbols(spec, &ctx, &points)?;
        let res = cmp.max_residual();
        if res <= 0.0 {
            return Err(SpinError::InvalidInput(
                "residual at roundoff; scaling fit is meaningless for linear specs".into(),
            ));
        }
        xs.push(ctx.hbar.ln());
        ys.push(res.ln());
    }
    // Least-squares slope of ln(res) vs ln(hbar).
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Apply the first-order operator R_m to a function of (U, V) by fourth-order
/// central differences (holomorphic, so real steps suffice).
fn apply_r_m<F>(f: &F, m: usize, u: C64, v: C64) -> Result<C64>
where
    F: Fn(C64, C64) -> Result<C64>,
{
    let s = 1e-5;
    let deriv = |g: &dyn Fn(f64) -> Result<C64>| -> Result<C64> {
        Ok((-g(2.0 * s)? + g(s)? * 8.0 - g(-s)? * 8.0 + g(-2.0 * s)?) / C64::new(12.0 * s, 0.0))
    };
    let fu = deriv(&|d| f(u + d, v))?;
    let fv = deriv(&|d| f(u, v + d))?;
    let one = C64::new(1.0, 0.0);
    let two_i = C64::new(0.0, 2.0);
    Ok(match m {
        1 => (one - u * u) * 0.5 * fu + (one - v * v) * 0.5 * fv,
        2 => (one + u * u) / two_i * fu - (one + v * v) / two_i * fv,
        3 => u * fu + v * fv,
        _ => return Err(SpinError::InvalidInput(format!("invalid direction m = {m}"))),
    })
}

fn unit_component(m: usize, u: C64, v: C64) -> C64 {
    let d = C64::new(1.0, 0.0) + u * v;
    match m {
        1 => (u + v) / d,
        2 => (v - u) / (C64::new(0.0, 1.0) * d),
        _ => (u * v - C64::new(1.0, 0.0)) / d,
    }
}

/// Check the exact recursion h~ = hbar j n_m h + (hbar/2) R_m h for a single
/// site, where h~ is the Q-symbol of (J_m H + H J_m)/2. Returns the maximum
/// relative residual over the sample points.
pub fn verify_recursion(
    spec: &HamiltonianSpec,
    ctx: &ModelContext,
    m: usize,
    points: &[(C64, C64)],
) -> Result<f64> {
    if ctx.n_sites != 1 {
        return Err(SpinError::InvalidInput(
            "recursion check is formulated for a single site".into(),
        ));
    }
    let h_mat = build_hamiltonian(spec, ctx)?;
    let component = match m {
        1 => SpinComponent::X,
        2 => SpinComponent::Y,
        3 => SpinComponent::Z,
        _ => return Err(SpinError::InvalidInput(format!("invalid direction m = {m}"))),
    };
    let j_m = build_spin_operators(ctx).component(component).clone();
    let h_tilde = (j_m.dot(&h_mat) + h_mat.dot(&j_m)) * C64::new(0.5, 0.0);

    let h_fn = |u: C64, v: C64| q_symbol_of_matrix(&h_mat, &[u], &[v], ctx);
    let hbar = ctx.hbar;
    let j = ctx.spin_j();
    let mut worst = 0.0f64;
    for &(u, v) in points {
        let lhs = q_symbol_of_matrix(&h_tilde, &[u], &[v], ctx)?;
        let rhs = C64::new(hbar * j, 0.0) * unit_component(m, u, v) * h_fn(u, v)?
            + C64::new(0.5 * hbar, 0.0) * apply_r_m(&h_fn, m, u, v)?;
        let rel = (lhs - rhs).norm() / lhs.norm().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
