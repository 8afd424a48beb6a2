//! Exact quantum oracle: spin operators, chain Hamiltonians, coherent states,
//! propagator traces and spectra by dense diagonalization.

use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use crate::hamiltonian::{HamiltonianSpec, SpinComponent};
use crate::linalg::{eye, hermiticity_residual, kron};
use crate::{C64, CMat, CVec};
use ndarray_linalg::Eigh;
use ndarray_linalg::UPLO;
use std::sync::OnceLock;

/// The irreducible spin-j matrices in the |j,m> basis, m ascending.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub jx: CMat,
    pub jy: CMat,
    pub jz: CMat,
    pub jp: CMat,
    pub jm: CMat,
}

/// Build the (2j+1)-dimensional spin matrices for the given context.
pub fn build_spin_operators(ctx: &ModelContext) -> SpinOperators {
    let d = ctx.site_dim();
    let j = ctx.spin_j();
    let hbar = ctx.hbar;
    let mut jz = CMat::zeros((d, d));
    let mut jp = CMat::zeros((d, d));
    for a in 0..d {
        let m = a as f64 - j;
        jz[(a, a)] = C64::new(hbar * m, 0.0);
        if a + 1 < d {
            // <j,m+1| J+ |j,m> = hbar sqrt(j(j+1) - m(m+1))
            jp[(a + 1, a)] = C64::new(hbar * (j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.t().mapv(|z| z.conj());
    let jx = (&jp + &jm).mapv(|z| z * 0.5);
    let jy = (&jp - &jm).mapv(|z| z * C64::new(0.0, -0.5));
    SpinOperators { jx, jy, jz, jp, jm }
}

impl SpinOperators {
    pub fn component(&self, c: SpinComponent) -> &CMat {
        match c {
            SpinComponent::X => &self.jx,
            SpinComponent::Y => &self.jy,
            SpinComponent::Z => &self.jz,
        }
    }
}

/// Embed a single-site operator into the chain Hilbert space (site 0 leftmost).
pub fn embed_site_operator(op: &CMat, site: usize, ctx: &ModelContext) -> CMat {
    let d = ctx.site_dim();
    let mut out = eye(1);
    for s in 0..ctx.n_sites {
        let factor = if s == site { op.clone() } else { eye(d) };
        out = kron(&out, &factor);
    }
    out
}

/// Assemble the dense chain Hamiltonian, Hermitizing each term as (P + P')/2.
pub fn build_hamiltonian(spec: &HamiltonianSpec, ctx: &ModelContext) -> Result<CMat> {
    spec.validate(ctx)?;
    let dim = ctx.check_dimension()?;
    let ops = build_spin_operators(ctx);
    let mut h = CMat::zeros((dim, dim));
    for term in &spec.terms {
        let mut p = eye(dim);
        for f in &term.factors {
            let full = embed_site_operator(ops.component(f.component), f.site, ctx);
            p = p.dot(&full);
        }
        let p_dag = p.t().mapv(|z| z.conj());
        let herm = (&p + &p_dag).mapv(|z| z * (0.5 * term.coeff));
        h += &herm;
    }
    debug_assert!(hermiticity_residual(&h) < 1e-12 * (1.0 + crate::linalg::max_norm(&h)));
    Ok(h)
}

fn binomial(n: u32, k: u32) -> f64 {
    // Product form keeps intermediate values in range for n up to ~1000.
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Unnormalized single-site coherent state e^{u J+/hbar} |j,-j>.
///
/// Components c_a = sqrt(binom(2j, a)) u^a in the ascending-m basis.
pub fn coherent_state(u: C64, ctx: &ModelContext) -> CVec {
    let d = ctx.site_dim();
    let two_j = ctx.twice_j;
    let mut c = CVec::zeros(d);
    let mut upow = C64::new(1.0, 0.0);
    for a in 0..d {
        c[a] = C64::new(binomial(two_j, a as u32).sqrt(), 0.0) * upow;
        upow *= u;
    }
    c
}

/// Product coherent state over the chain, site 0 leftmost.
pub fn chain_coherent_state(us: &[C64], ctx: &ModelContext) -> CVec {
    assert_eq!(us.len(), ctx.n_sites);
    let mut out = CVec::from_elem(1, C64::new(1.0, 0.0));
    for &u in us {
        let site = coherent_state(u, ctx);
        let mut next = CVec::zeros(out.len() * site.len());
        for (i, &a) in out.iter().enumerate() {
            for (k, &b) in site.iter().enumerate() {
                next[i * site.len() + k] = a * b;
            }
        }
        out = next;
    }
    out
}

/// Row vector of the bra <V*| so that bra . ket = (1 + V U)^{2j} per site.
pub fn chain_coherent_bra(vs: &[C64], ctx: &ModelContext) -> CVec {
    // <V*| has components conj(c_a(V*)) = sqrt(binom) V^a: same closed form.
    chain_coherent_state(vs, ctx)
}

/// Closed-form overlap <V*|U> = prod_i (1 + V_i U_i)^{2j}.
pub fn overlap(us: &[C64], vs: &[C64], ctx: &ModelContext) -> C64 {
    let two_j = ctx.twice_j as i32;
    us.iter()
        .zip(vs)
        .map(|(&u, &v)| (C64::new(1.0, 0.0) + v * u).powi(two_j))
        .product()
}

/// Normalized diagonal matrix element <V*|H|U> / <V*|U> of the operator.
///
/// Coherent states are site products, so the Q-symbol of each Hermitized
/// monomial factorizes into single-site symbols; the chain matrix is never
/// assembled and the cost stays polynomial in the site dimension.
pub fn q_symbol(spec: &HamiltonianSpec, us: &[C64], vs: &[C64], ctx: &ModelContext) -> Result<C64> {
    spec.validate(ctx)?;
    for (site, (&u, &v)) in us.iter().zip(vs).enumerate() {
        let mag = (C64::new(1.0, 0.0) + v * u).norm();
        if mag < 1e-12 {
            return Err(SpinError::OverlapZero { site, magnitude: mag });
        }
    }
    let ctx1 = ModelContext::new(1, ctx.twice_j, ctx.hbar)?;
    let ops = build_spin_operators(&ctx1);
    let mut total = C64::new(0.0, 0.0);
    for term in &spec.terms {
        // Ordered operator product collected per site; factors on different
        // sites commute.
        let mut prods: Vec<Option<CMat>> = vec![None; ctx.n_sites];
        for f in &term.factors {
            let op = ops.component(f.component);
            prods[f.site] = Some(match prods[f.site].take() {
                Some(p) => p.dot(op),
                None => op.clone(),
            });
        }
        let mut qp = C64::new(1.0, 0.0);
        let mut qp_dag = C64::new(1.0, 0.0);
        for (s, prod) in prods.iter().enumerate() {
            if let Some(p) = prod {
                qp *= q_symbol_of_matrix(p, &[us[s]], &[vs[s]], &ctx1)?;
                let p_dag = p.t().mapv(|z| z.conj());
                qp_dag *= q_symbol_of_matrix(&p_dag, &[us[s]], &[vs[s]], &ctx1)?;
            }
        }
        total += 0.5 * term.coeff * (qp + qp_dag);
    }
    Ok(total)
}

/// Q-symbol of an already assembled dense operator.
pub fn q_symbol_of_matrix(h: &CMat, us: &[C64], vs: &[C64], ctx: &ModelContext) -> Result<C64> {
    let ket = chain_coherent_state(us, ctx);
    let bra = chain_coherent_bra(vs, ctx);
    let hket = h.dot(&ket);
    let num: C64 = bra.iter().zip(hket.iter()).map(|(&b, &x)| b * x).sum();
    let den: C64 = bra.iter().zip(ket.iter()).map(|(&b, &x)| b * x).sum();
    if den.norm() < 1e-300 {
        return Err(SpinError::OverlapZero {
            site: 0,
            magnitude: den.norm(),
        });
    }
    Ok(num / den)
}

/// Energy or eigenphase grid with density values.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Dense Hamiltonian together with its cached eigendecomposition.
pub struct ExactModel {
    pub matrix: CMat,
    pub ctx: ModelContext,
    eigen: OnceLock<(Vec<f64>, CMat)>,
}

impl ExactModel {
    pub fn new(spec: &HamiltonianSpec, ctx: &ModelContext) -> Result<Self> {
        Ok(ExactModel {
            matrix: build_hamiltonian(spec, ctx)?,
            ctx: *ctx,
            eigen: OnceLock::new(),
        })
    }

    pub fn from_matrix(matrix: CMat, ctx: &ModelContext) -> Self {
        ExactModel {
            matrix,
            ctx: *ctx,
            eigen: OnceLock::new(),
        }
    }

    fn eigen(&self) -> &(Vec<f64>, CMat) {
        self.eigen.get_or_init(|| {
            let (vals, vecs) = self
                .matrix
                .eigh(UPLO::Lower)
                .expect("Hermitian eigendecomposition");
            (vals.to_vec(), vecs)
        })
    }

    /// Sorted real eigenvalues.
    pub fn spectrum(&self) -> &[f64] {
        &self.eigen().0
    }

    /// Tr exp(-i H t / hbar) from the cached spectrum.
    pub fn propagator_trace(&self, t: f64) -> C64 {
        let hbar = self.ctx.hbar;
        self.spectrum()
            .iter()
            .map(|&e| C64::new(0.0, -e * t / hbar).exp())
            .sum()
    }

    /// Gaussian-smoothed counting density on the given grid.
    pub fn density(&self, grid: &[f64], sigma: f64) -> Result<SpectralDensity> {
        if !(sigma > 0.0) {
            return Err(SpinError::InvalidInput(
                "smoothing width must be positive".into(),
            ));
        }
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let values = grid
            .iter()
            .map(|&e| {
                self.spectrum()
                    .iter()
                    .map(|&en| {
                        let x = (e - en) / sigma;
                        norm * (-0.5 * x * x).exp()
                    })
                    .sum()
            })
            .collect();
        Ok(SpectralDensity {
            grid: grid.to_vec(),
            values,
        })
    }
}

/// Gauss-Legendre nodes and weights on (-1, 1) by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-style initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Max-norm residual of the single-site overcompleteness relation, evaluated
/// by polar quadrature with the substitution r = cot(theta/2).
pub fn resolve_identity_check(ctx: &ModelContext, order: usize) -> Result<f64> {
    if ctx.n_sites != 1 {
        return Err(SpinError::InvalidInput(
            "overcompleteness check is a single-site statement".into(),
        ));
    }
    let d = ctx.site_dim();
    let two_j = ctx.twice_j as i32;
    let (theta_nodes, theta_weights) = gauss_legendre(order);
    // Uniform phi grid integrates e^{i phi (a - a')} exactly for |a - a'| < n_phi.
    let n_phi = 2 * d + 2;
    let mut acc = CMat::zeros((d, d));
    for (&xi, &wi) in theta_nodes.iter().zip(&theta_weights) {
        // Map (-1,1) -> (0,pi).
        let theta = (xi + 1.0) * std::f64::consts::PI / 2.0;
        let w = wi * std::f64::consts::PI / 2.0;
        let half = theta / 2.0;
        let r = half.cos() / half.sin();
        let sin2 = half.sin() * half.sin();
        // d^2U = r dr dphi, dr = -dtheta / (2 sin^2(theta/2)); orientation absorbed.
        let radial = r / (2.0 * sin2);
        let weight_norm = sin2.powi(two_j + 2); // (1+r^2)^{-(2j+2)}
        for p in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * p as f64 / n_phi as f64;
            let u = C64::new(0.0, phi).exp() * r;
            let ket = coherent_state(u, ctx);
            let scale = C64::new(w * radial * weight_norm * 2.0 * std::f64::consts::PI
                / n_phi as f64, 0.0);
            for a in 0..d {
                for b in 0..d {
                    acc[(a, b)] += scale * ket[a] * ket[b].conj();
                }
            }
        }
    }
    let prefactor = (two_j as f64 + 1.0) / std::f64::consts::PI;
    let resolved = acc.mapv(|z| z * prefactor);
    Ok(crate::linalg::max_norm(&(&resolved - &eye(d))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::SpinComponent::{X, Y, Z};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx1(twice_j: u32, hbar: f64) -> ModelContext {
        ModelContext::new(1, twice_j, hbar).unwrap()
    }

    #[test]
    fn jz_defining_representations() {
        let ops = build_spin_operators(&ctx1(1, 1.0));
        assert_abs_diff_eq!(ops.jz[(0, 0)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ops.jz[(1, 1)].re, 0.5, epsilon = 1e-15);
        let ops = build_spin_operators(&ctx1(2, 1.0));
        assert_abs_diff_eq!(ops.jz[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ops.jz[(1, 1)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ops.jz[(2, 2)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn su2_commutator() {
        for twice_j in [1u32, 2, 5, 11, 40] {
            let ctx = ctx1(twice_j, 0.7);
            let ops = build_spin_operators(&ctx);
            let comm = ops.jx.dot(&ops.jy) - ops.jy.dot(&ops.jx);
            let expected = ops.jz.mapv(|z| z * C64::new(0.0, ctx.hbar));
            let scale = crate::linalg::max_norm(&expected).max(1.0);
            assert!(
                crate::linalg::max_norm(&(&comm - &expected)) / scale < 1e-13,
                "commutator fails at 2j = {twice_j}"
            );
        }
    }

    #[test]
    fn single_site_jz_hamiltonian() {
        let ctx = ctx1(2, 0.9);
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z)]);
        let h = build_hamiltonian(&spec, &ctx).unwrap();
        for (a, expect) in [(0, -0.9), (1, 0.0), (2, 0.9)] {
            assert_abs_diff_eq!(h[(a, a)].re, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn ising_coupling_by_hand_kron() {
        // J3@0 J3@1 at j = 1/2: diag(+,-,-,+) * hbar^2/4 in the ascending basis.
        let ctx = ModelContext::new(2, 1, 2.0).unwrap();
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z), (1, Z)]);
        let h = build_hamiltonian(&spec, &ctx).unwrap();
        let q = ctx.hbar * ctx.hbar / 4.0;
        for (idx, sign) in [(0, 1.0), (1, -1.0), (2, -1.0), (3, 1.0)] {
            assert_abs_diff_eq!(h[(idx, idx)].re, sign * q, epsilon = 1e-14);
        }
        assert!(hermiticity_residual(&h) < 1e-12);
    }

    #[test]
    fn hermitization_of_noncommuting_factors() {
        let ctx = ctx1(4, 1.0);
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, X), (0, Y)]);
        let h = build_hamiltonian(&spec, &ctx).unwrap();
        let ops = build_spin_operators(&ctx);
        let sym = (ops.jx.dot(&ops.jy) + ops.jy.dot(&ops.jx)).mapv(|z| z * 0.5);
        assert!(crate::linalg::max_norm(&(&h - &sym)) < 1e-13);
    }

    #[test]
    fn coherent_state_closed_forms() {
        let ctx = ctx1(2, 1.0); // j = 1
        let c0 = coherent_state(C64::new(0.0, 0.0), &ctx);
        assert_abs_diff_eq!(c0[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c0[1].norm(), 0.0, epsilon = 1e-15);
        let c1 = coherent_state(C64::new(1.0, 0.0), &ctx);
        assert_abs_diff_eq!(c1[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c1[1].re, 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(c1[2].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn overlap_identity_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let twice_j = rng.gen_range(1..=20u32);
            let ctx = ctx1(twice_j, 1.0);
            let u = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let v = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let ket = coherent_state(u, &ctx);
            let bra = coherent_state(v, &ctx);
            let dot: C64 = bra.iter().zip(ket.iter()).map(|(&b, &k)| b * k).sum();
            let closed = (C64::new(1.0, 0.0) + v * u).powi(twice_j as i32);
            // The binomial sum carries roundoff relative to its largest term,
            // (1 + |u||v|)^{2j}, so measure against that scale.
            let denom = (1.0 + u.norm() * v.norm()).powi(twice_j as i32);
            assert!(
                (dot - closed).norm() / denom < 1e-12,
                "overlap mismatch at 2j={twice_j}, u={u}, v={v}"
            );
        }
    }

    #[test]
    fn half_spin_overlap_value() {
        let ctx = ctx1(1, 1.0);
        let one = C64::new(1.0, 0.0);
        let o = overlap(&[one], &[one], &ctx);
        assert_abs_diff_eq!(o.re, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn q_symbol_linear_closed_form() {
        // H = J3, N = 1: q = hbar j (uv - 1)/(uv + 1).
        let ctx = ctx1(6, 0.5); // j = 3
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let v = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            // Keep the overlap well conditioned so the matrix-element route
            // carries no amplified cancellation error.
            let cond = ((1.0 + u.norm() * v.norm()) / (C64::new(1.0, 0.0) + u * v).norm())
                .powi(ctx.twice_j as i32);
            if cond > 1e2 {
                continue;
            }
            let q = q_symbol(&spec, &[u], &[v], &ctx).unwrap();
            let closed = C64::new(ctx.hbar * ctx.spin_j(), 0.0) * (u * v - 1.0) / (u * v + 1.0);
            assert!((q - closed).norm() < 1e-12 * cond * closed.norm().max(1.0));
        }
        let q0 = q_symbol(&spec, &[C64::new(0.0, 0.0)], &[C64::new(0.0, 0.0)], &ctx).unwrap();
        assert_abs_diff_eq!(q0.re, -ctx.hbar * ctx.spin_j(), epsilon = 1e-14);
    }

    #[test]
    fn q_symbol_identity_operator() {
        let ctx = ctx1(3, 1.0);
        let spec = HamiltonianSpec::new(vec![crate::hamiltonian::Term::new(1.0, vec![])]);
        let q = q_symbol(&spec, &[C64::new(0.3, 0.2)], &[C64::new(-0.4, 0.9)], &ctx).unwrap();
        assert_abs_diff_eq!((q - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn q_symbol_overlap_zero_error() {
        let ctx = ctx1(2, 1.0);
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z)]);
        let u = C64::new(1.0, 0.0);
        let v = C64::new(-1.0, 0.0);
        assert!(matches!(
            q_symbol(&spec, &[u], &[v], &ctx),
            Err(SpinError::OverlapZero { .. })
        ));
    }

    #[test]
    fn propagator_trace_diagonal_and_unitary() {
        let ctx = ctx1(4, 1.0); // j = 2
        let omega = 1.3;
        let spec = HamiltonianSpec::monomial(omega, vec![(0, Z)]);
        let model = ExactModel::new(&spec, &ctx).unwrap();
        assert_abs_diff_eq!(model.propagator_trace(0.0).re, 5.0, epsilon = 1e-13);
        let t = 0.77;
        let expect: C64 = (-2..=2)
            .map(|m| C64::new(0.0, -omega * m as f64 * t).exp())
            .sum();
        assert!((model.propagator_trace(t) - expect).norm() < 1e-12);
        // Conjugate symmetry Tr K(t)* = Tr K(-t).
        let fwd = model.propagator_trace(t).conj();
        let bwd = model.propagator_trace(-t);
        assert!((fwd - bwd).norm() < 1e-13);
    }

    #[test]
    fn two_spin_ising_spectrum() {
        let ctx = ModelContext::new(2, 1, 1.0).unwrap();
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z), (1, Z)]);
        let model = ExactModel::new(&spec, &ctx).unwrap();
        let s = model.spectrum();
        assert_abs_diff_eq!(s[0], -0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], -0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s[2], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s[3], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn density_normalization_and_zero_width() {
        let ctx = ctx1(2, 1.0);
        let spec = HamiltonianSpec::monomial(1.0, vec![(0, Z)]);
        let model = ExactModel::new(&spec, &ctx).unwrap();
        assert!(model.density(&[0.0], 0.0).is_err());
        let sigma = 0.05;
        let n = 4001;
        let grid: Vec<f64> = (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64).collect();
        let dens = model.density(&grid, sigma).unwrap();
        let dx = grid[1] - grid[0];
        let total: f64 = dens.values.iter().sum::<f64>() * dx;
        assert!((total - 3.0).abs() / 3.0 < 1e-6, "integral = {total}");
    }

    #[test]
    fn overcompleteness_quadrature_converges() {
        let ctx = ctx1(1, 1.0);
        let r64 = resolve_identity_check(&ctx, 64).unwrap();
        assert!(r64 < 1e-10, "j=1/2 order-64 residual {r64}");
        let ctx5 = ctx1(10, 1.0);
        let r_lo = resolve_identity_check(&ctx5, 16).unwrap();
        let r_hi = resolve_identity_check(&ctx5, 128).unwrap();
        assert!(r_hi < 1e-8, "j=5 order-128 residual {r_hi}");
        assert!(r_hi < r_lo);
    }

    #[test]
    fn spectrum_is_real_and_matrix_hermitian_for_random_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let ctx = ModelContext::new(2, 2, 1.0).unwrap();
            let comps = [X, Y, Z];
            let mut terms = Vec::new();
            for _ in 0..3 {
                let deg = rng.gen_range(1..=3usize);
                let factors: Vec<_> = (0..deg)
                    .map(|_| (rng.gen_range(0..2usize), comps[rng.gen_range(0..3usize)]))
                    .collect();
                terms.push(crate::hamiltonian::Term::new(rng.gen_range(-2.0..2.0), factors));
            }
            let spec = HamiltonianSpec::new(terms);
            let h = build_hamiltonian(&spec, &ctx).unwrap();
            assert!(hermiticity_residual(&h) < 1e-12 * (1.0 + crate::linalg::max_norm(&h)));
            let model = ExactModel::from_matrix(h, &ctx);
            assert!(model.spectrum().iter().all(|e| e.is_finite()));
        }
    }
}
