//! End-to-end acceptance checks: every test here validates one headline
//! guarantee of the crate against an independent oracle (exact quantum
//! results, closed forms, or direct evaluation). One pass/fail line each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spintrace::classical::ClassicalHamiltonian;
use spintrace::context::ModelContext;
use spintrace::floquet::{
    ClassicalDriven, DrivenModel, MapSearchConfig, build_floquet, find_map_orbits, floquet_traces,
    trace_f_semiclassical,
};
use spintrace::hamiltonian::SpinComponent::{self, X, Y, Z};
use spintrace::hamiltonian::{HamiltonianSpec, Term};
use spintrace::linalg::{det, random_symplectic, symplecticity_residual};
use spintrace::orbits::{OrbitSearchConfig, SearchWindow, find_periodic_orbits};
use spintrace::quantum::{ExactModel, resolve_identity_check};
use spintrace::semiclassics::{
    density_osc, orbit_family, semiclassical_propagator, symplectic_invariance_check,
    three_dets_check,
};
use spintrace::sk::{compare_symbols, sample_points, verify_hprime, verify_recursion};
use spintrace::{C64, CMat};

/// Indices of strict local maxima of a sampled curve.
fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len() - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .collect()
}

/// 1. For linear Hamiltonians the semiclassical coherent-state propagator is
/// exact: K_sc(U', V'', t) equals e^{i omega t j} (1 + V'' U' e^{-i omega t})^{2j}
/// to relative error < 1e-10 for j in {1/2, 5, 20}, 20 random endpoint pairs.
#[test]
fn linear_propagator_is_exact() {
    let omega = 1.1;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for twice_j in [1u32, 10, 40] {
        let ctx = ModelContext::new(1, twice_j, 1.0).unwrap();
        let spec = HamiltonianSpec::monomial(omega, vec![(0, Z)]);
        let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
        let j = ctx.spin_j();
        let mut pairs = 0;
        while pairs < 20 {
            let u = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = rng.gen_range(0.01..0.99) * 2.0 * std::f64::consts::PI / omega;
            // The propagator has an exact zero where the shifted overlap
            // 1 + V'' U' e^{-i omega t} vanishes; relative error is undefined
            // on that measure-zero set, so stay a fixed distance away.
            let shifted = C64::new(1.0, 0.0) + v * u * (-C64::new(0.0, omega * t)).exp();
            if shifted.norm() < 0.3 || (C64::new(1.0, 0.0) + v * u).norm() < 0.3 {
                continue;
            }
            pairs += 1;
            let k_sc = semiclassical_propagator(&h, ctx.hbar, &[u], &[v], t).unwrap();
            let phase = C64::new(0.0, omega * t);
            let exact = (phase * j).exp()
                * (C64::new(1.0, 0.0) + v * u * (-phase).exp()).powf(2.0 * j);
            let rel = (k_sc - exact).norm() / exact.norm();
            assert!(rel < 1e-10, "2j = {twice_j}: relative error {rel:.3e}");
        }
    }
}

/// 2. Solari-Kochetov cancellation: with J_class fixed, max|h - H - hbar Z|
/// scales as hbar^2 (fitted exponent in [1.8, 2.2]) for quadratic models, and
/// vanishes to roundoff for linear ones.
#[test]
fn sk_cancellation_scaling() {
    let j_list = [10u32, 20, 40, 80, 160]; // j = 5..80
    let quad = HamiltonianSpec::monomial(1.0, vec![(0, Z), (0, Z)]);
    let slope = verify_hprime(&quad, 1, 1.0, &j_list, 40, 7).unwrap();
    assert!((1.8..=2.2).contains(&slope), "J3^2 exponent {slope:.3}");

    let coupled = HamiltonianSpec::monomial(1.0, vec![(0, X), (1, X)]);
    let slope = verify_hprime(&coupled, 2, 1.0, &j_list, 40, 7).unwrap();
    assert!((1.8..=2.2).contains(&slope), "J1 J1 exponent {slope:.3}");

    let linear = HamiltonianSpec::monomial(0.9, vec![(0, Z)]);
    let points = sample_points(1, 40, 7);
    for twice_j in j_list {
        let ctx = ModelContext::with_fixed_j_class(1, twice_j, 1.0).unwrap();
        let res = compare_symbols(&linear, &ctx, &points).unwrap().max_residual();
        assert!(res < 1e-12, "linear residual {res:.3e} at 2j = {twice_j}");
    }
}

/// 3. Three-determinants identity det M_bb det H_F = det(M - 1) and its
/// symplectic-conjugation invariance, residual < 1e-9 for 1000 random exact
/// symplectic matrices per size 2N in {2, 4, ..., 20}.
#[test]
fn three_determinants_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for two_n in (2..=20).step_by(2) {
        for _ in 0..1000 {
            let m = random_symplectic(two_n, &mut rng);
            let res = three_dets_check(&m).unwrap();
            assert!(res < 1e-9, "size {two_n}: residual {res:.3e}");
            let w = random_symplectic(two_n, &mut rng);
            let inv = symplectic_invariance_check(&m, &w).unwrap();
            assert!(inv < 1e-9, "size {two_n}: invariance residual {inv:.3e}");
        }
    }
}

fn two_spin_model(twice_j: u32) -> (ModelContext, ClassicalHamiltonian, HamiltonianSpec) {
    let ctx = ModelContext::new(2, twice_j, 1.0).unwrap();
    let jc = ctx.j_class();
    let spec = HamiltonianSpec::new(vec![
        Term::new(0.9, vec![(0, Z)]),
        Term::new(0.9, vec![(1, Z)]),
        Term::new(0.45 / jc, vec![(0, X), (1, X)]),
    ]);
    let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
    (ctx, h, spec)
}

/// 4. Canonical tangent flow: for the two-spin coupled model every found
/// orbit's monodromy is symplectic to 1e-6 and carries the flow-direction
/// unit-eigenvalue pair, |det(M - 1)| < 1e-6.
#[test]
fn monodromy_is_symplectic_with_unit_pair() {
    let (ctx, h, _) = two_spin_model(10);
    let e = 0.4 * ctx.j_class();
    let cfg = OrbitSearchConfig { n_seeds: 48, t_search: 25.0, ..Default::default() };
    let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e), &cfg).unwrap();
    assert!(!orbits.is_empty(), "no orbits found on the shell");
    for o in &orbits {
        let res = symplecticity_residual(&o.monodromy);
        assert!(res < 1e-6, "T = {:.4}: symplecticity residual {res:.3e}", o.period);
        let d = det(&(&o.monodromy - &CMat::eye(4))).norm();
        assert!(d < 1e-6, "T = {:.4}: |det(M-1)| = {d:.3e}", o.period);
    }
}

/// 5. 1-DOF quantization: for H = J3^2/(2 J_class) + 1.2 J1 at j = 20, the
/// peaks of the periodic-orbit density align with the exact eigenvalues to
/// within 10% of the local mean level spacing over the central two-thirds of
/// the spectrum.
#[test]
fn one_dof_density_peaks_match_spectrum() {
    let ctx = ModelContext::new(1, 40, 1.0).unwrap();
    let jc = ctx.j_class();
    let spec = HamiltonianSpec::new(vec![
        Term::new(0.5 / jc, vec![(0, Z), (0, Z)]),
        Term::new(1.2, vec![(0, X)]),
    ]);
    let exact = ExactModel::new(&spec, &ctx).unwrap();
    let energies = exact.spectrum();
    let n = energies.len();
    let (lo, hi) = (n / 6, n - n / 6); // central two-thirds
    let mean_spacing = (energies[n - 1] - energies[0]) / (n - 1) as f64;

    let h = ClassicalHamiltonian::new(&spec, &ctx).unwrap();
    let e_center = energies[n / 2];
    let cfg = OrbitSearchConfig { n_seeds: 16, ..Default::default() };
    let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e_center), &cfg).unwrap();
    let seed = orbits.iter().find(|o| o.repetitions == 1).expect("primitive orbit");

    let e_min = energies[lo] - mean_spacing;
    let e_max = energies[hi - 1] + mean_spacing;
    let grid: Vec<f64> = (0..1601)
        .map(|i| e_min + i as f64 * (e_max - e_min) / 1600.0)
        .collect();
    let family = orbit_family(&h, seed, &grid).unwrap();
    let sigma = 0.25 * mean_spacing;
    let d = density_osc(&family, ctx.hbar, 12, sigma);

    let peaks: Vec<f64> = local_maxima(&d.values).iter().map(|&i| d.grid[i]).collect();
    for m in lo..hi {
        let local = 0.5 * (energies[m + 1] - energies[m - 1]);
        let nearest = peaks
            .iter()
            .map(|&p| (p - energies[m]).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest < 0.1 * local,
            "level {m} at E = {:.4}: nearest peak off by {nearest:.4} (10% spacing = {:.4})",
            energies[m],
            0.1 * local
        );
    }
}

/// 6. Period-peak correspondence: for the non-integrable two-spin model at
/// j = 15, the peaks of the Gaussian-windowed spectral Fourier transform
/// |sum_n w(E_n) e^{i E_n t/hbar}| sit at the periods of the three shortest
/// classical orbits (repetitions included), within the t-grid resolution.
#[test]
fn spectral_fourier_peaks_at_orbit_periods() {
    let (ctx, h, spec) = two_spin_model(30);
    let exact = ExactModel::new(&spec, &ctx).unwrap();
    let energies = exact.spectrum();
    let e_bar = energies.iter().sum::<f64>() / energies.len() as f64;

    let cfg = OrbitSearchConfig { n_seeds: 64, t_search: 25.0, ..Default::default() };
    let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e_bar), &cfg).unwrap();
    // Repetitions are closed orbits too and produce their own transform
    // peaks at r T_P, so every returned period enters the candidate list.
    let mut periods: Vec<f64> = orbits.iter().map(|o| o.period).collect();
    periods.sort_by(f64::total_cmp);
    periods.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    assert!(periods.len() >= 3, "found only {} orbit periods", periods.len());

    // Gaussian-windowed transform of the exact spectrum. The window must be
    // narrow enough that the period drift |dT/dE| sigma stays below the grid
    // step (a symmetric window's transform peaks at T(e_bar) even for a
    // chirped orbit band) yet wide enough to cover many levels.
    let dt = 0.02;
    let sigma = 2.0;
    let t_grid: Vec<f64> = (0..1000).map(|i| 0.5 + i as f64 * dt).collect();
    let values: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let f: C64 = energies
                .iter()
                .map(|&e| {
                    let de = e - e_bar;
                    (-de * de / (2.0 * sigma * sigma)).exp()
                        * C64::new(0.0, e * t / ctx.hbar).exp()
                })
                .sum();
            f.norm()
        })
        .collect();
    let peak_times: Vec<f64> = local_maxima(&values).iter().map(|&i| t_grid[i]).collect();

    for &t_orbit in periods.iter().take(3) {
        let nearest = peak_times
            .iter()
            .map(|&p| (p - t_orbit).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            nearest <= dt + 1e-12,
            "orbit period {t_orbit:.4}: nearest spectral peak off by {nearest:.4}"
        );
    }
}

/// 7. Driven trace formula: for the chaotic kicked spin, the total deviation
/// of the semiclassical |Tr F^n| (n <= 3) from the exact Floquet traces
/// decreases monotonically across j in {20, 50, 100, 200}.
#[test]
fn kicked_spin_traces_improve_with_j() {
    let (p, kappa, t0) = (1.7, 6.0, 1.0);
    // Classical dynamics depends only on J_class = 1, so orbits are shared
    // across all j; only hbar changes in the trace sum.
    let ctx_cl = ModelContext::with_fixed_j_class(1, 40, 1.0).unwrap();
    let jc = ctx_cl.j_class();
    let model = DrivenModel::new(
        HamiltonianSpec::monomial(p, vec![(0, Y)]),
        HamiltonianSpec::monomial(kappa / (2.0 * jc), vec![(0, Z), (0, Z)]),
        t0,
    )
    .unwrap();
    let driven = ClassicalDriven::new(&model, &ctx_cl).unwrap();
    let orbit_sets: Vec<_> = (1..=3u32)
        .map(|n| {
            let cfg = MapSearchConfig { n_seeds: 64 * n as usize, ..Default::default() };
            find_map_orbits(&driven, n, &cfg).unwrap()
        })
        .collect();
    for (i, set) in orbit_sets.iter().enumerate() {
        assert!(!set.is_empty(), "no period-{} points found", i + 1);
    }

    let mut errors = Vec::new();
    for twice_j in [40u32, 100, 200, 400] {
        let ctx = ModelContext::with_fixed_j_class(1, twice_j, 1.0)
            .unwrap()
            .with_dimension_cap(4096);
        let f = build_floquet(&model, &ctx).unwrap();
        let exact = floquet_traces(&f, 3);
        let mut err = 0.0;
        for n in 1..=3usize {
            let sc = trace_f_semiclassical(&orbit_sets[n - 1], ctx.hbar);
            err += (sc - exact[n - 1]).norm();
        }
        errors.push(err);
    }
    for w in errors.windows(2) {
        assert!(
            w[1] < w[0],
            "trace error not monotone in j: {errors:?}"
        );
    }
}

/// 8. Overcompleteness: the coherent-state resolution of the identity holds
/// to residual < 1e-8 at Gauss-Legendre order 128 for all j <= 5.
#[test]
fn overcompleteness_quadrature() {
    for twice_j in 1..=10u32 {
        let ctx = ModelContext::new(1, twice_j, 1.0).unwrap();
        let res = resolve_identity_check(&ctx, 128).unwrap();
        assert!(res < 1e-8, "2j = {twice_j}: residual {res:.3e}");
    }
}

/// 9. Matrix-element recursion: the Q-symbol of (J_m H + H J_m)/2 equals
/// hbar j n_m h + (hbar/2) R_m h to relative residual < 1e-8 for every
/// monomial of degree <= 3, all m, 50 random points, j in {1/2, 2, 10}.
#[test]
fn q_symbol_recursion() {
    let components = [X, Y, Z];
    let mut monomials: Vec<Vec<(usize, SpinComponent)>> = vec![vec![]];
    for &a in &components {
        monomials.push(vec![(0, a)]);
        for &b in &components {
            monomials.push(vec![(0, a), (0, b)]);
            for &c in &components {
                monomials.push(vec![(0, a), (0, b), (0, c)]);
            }
        }
    }
    for twice_j in [1u32, 4, 20] {
        let ctx = ModelContext::new(1, twice_j, 1.0).unwrap();
        let points: Vec<(C64, C64)> = sample_points(1, 50, 13)
            .into_iter()
            .map(|(us, vs)| (us[0], vs[0]))
            .collect();
        for mono in &monomials {
            let spec = HamiltonianSpec::monomial(1.0, mono.clone());
            for m in 1..=3 {
                let res = verify_recursion(&spec, &ctx, m, &points).unwrap();
                assert!(
                    res < 1e-8,
                    "2j = {twice_j}, monomial {mono:?}, m = {m}: residual {res:.3e}"
                );
            }
        }
    }
}
