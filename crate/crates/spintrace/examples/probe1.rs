use num_complex::Complex64 as C64;
use spintrace::context::ModelContext;
use spintrace::floquet::{build_floquet, find_map_orbits, floquet_traces,
    ClassicalDriven, DrivenModel, MapSearchConfig};
use spintrace::hamiltonian::HamiltonianSpec;
use spintrace::hamiltonian::SpinComponent::{Y, Z};

fn main() {
    let (p, kappa, t0) = (1.7, 6.0, 1.0);
    let ctx_cl = ModelContext::with_fixed_j_class(1, 40, 1.0).unwrap();
    let jc = ctx_cl.j_class();
    let model = DrivenModel::new(
        HamiltonianSpec::monomial(p, vec![(0, Y)]),
        HamiltonianSpec::monomial(kappa / (2.0 * jc), vec![(0, Z), (0, Z)]),
        t0,
    ).unwrap();
    let driven = ClassicalDriven::new(&model, &ctx_cl).unwrap();
    let n: u32 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(2);
    let cfg = MapSearchConfig { n_seeds: 128, ..Default::default() };
    let set = find_map_orbits(&driven, n, &cfg).unwrap();
    // exact traces over a j sweep
    let tjs: Vec<u32> = (40..=400).step_by(2).collect();
    let traces: Vec<C64> = tjs.iter().map(|&twice_j| {
        let ctx = ModelContext::with_fixed_j_class(1, twice_j, 1.0).unwrap().with_dimension_cap(4096);
        let f = build_floquet(&model, &ctx).unwrap();
        floquet_traces(&f, n)[n as usize - 1]
    }).collect();
    println!("orbit phase extraction (n={n}):");
    for o in &set {
        let s = o.action.re;
        let amp = o.n_p as f64 / o.det_m_minus_one.norm().sqrt();
        let mut c = C64::new(0.0, 0.0);
        for (&twice_j, tr) in tjs.iter().zip(&traces) {
            let jph = (twice_j as f64 + 1.0) / 2.0;
            c += tr * C64::new(0.0, -s * jph).exp();
        }
        c /= tjs.len() as f64;
        // expected c ~ amp * e^{iG}  (plus leakage from same-S partners)
        let g_fit = (c / amp).arg();
        println!("  n_p={} r={} S={:+.4}  A={:.4}  |c|={:.4}  G_fit={:+.4}  G_trk={:+.4}  (trk mod 2pi {:+.4})",
            o.n_p, o.repetitions, s, amp, c.norm(), g_fit, o.maslov,
            {
                let mut g = o.maslov % (2.0 * std::f64::consts::PI);
                if g > std::f64::consts::PI { g -= 2.0 * std::f64::consts::PI; }
                if g <= -std::f64::consts::PI { g += 2.0 * std::f64::consts::PI; }
                g
            });
    }
}
