//! Config-driven front end: one TOML file describes the model and a single
//! task; outputs are deterministic CSV tables plus a JSON run manifest.
//!
//! Numbers in CSV files are printed with 17 significant digits, so identical
//! config + seed reproduces byte-identical tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{ClassicalHamiltonian, ClassicalState, EvolveOptions, evolve};
use crate::context::ModelContext;
use crate::error::{Result, SpinError};
use crate::floquet::{
    ClassicalDriven, DrivenModel, MapSearchConfig, build_floquet, eigenphase_density,
    eigenphase_density_po, eigenphases, find_map_orbits, floquet_traces, trace_f_semiclassical,
};
use crate::hamiltonian::{HamiltonianSpec, Term};
use crate::linalg::random_symplectic;
use crate::orbits::{OrbitSearchConfig, SearchWindow, find_periodic_orbits};
use crate::quantum::{ExactModel, resolve_identity_check};
use crate::semiclassics::{
    density_osc, generalized_eigensystem, maslov_phase, orbit_family, symplectic_invariance_check,
    three_dets_check, time_domain_compare,
};
use crate::sk::{compare_symbols, sample_points, verify_hprime, verify_recursion};

/// Exit code for configuration / validation failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numeric failures (non-convergence, caps exceeded).
pub const EXIT_NUMERIC: i32 = 3;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub task: TaskBlock,
    #[serde(default)]
    pub numeric: NumericBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n_sites: usize,
    pub twice_j: u32,
    /// Exactly one of `hbar` / `j_class` must be given.
    pub hbar: Option<f64>,
    /// Fixed classical spin length; `hbar = j_class / (j + 1/2)`.
    pub j_class: Option<f64>,
    pub dimension_cap: Option<usize>,
    pub terms: Vec<Term>,
    /// Optional periodic drive: F = exp(-i H1/hbar) exp(-i H0 t0/hbar).
    pub kick: Option<KickBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickBlock {
    pub t0: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskBlock {
    /// Exact spectrum of the chain Hamiltonian.
    Spectrum,
    /// Integrate the classical flow from a given initial condition.
    Evolve {
        /// Initial (theta, phi) per site.
        initial: Vec<[f64; 2]>,
        t_final: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Periodic-orbit table on an energy shell or in a period window.
    Orbits {
        energy: Option<f64>,
        period_window: Option<[f64; 2]>,
    },
    /// Exact propagator trace vs the windowed spectral Fourier transform.
    Trace {
        t_min: f64,
        t_max: f64,
        n_points: usize,
    },
    /// Smoothed exact density of states, optionally with the periodic-orbit
    /// oscillating density from the shortest 1-DOF orbit family.
    Density {
        e_min: f64,
        e_max: f64,
        n_points: usize,
        sigma: f64,
        #[serde(default)]
        semiclassical: bool,
        #[serde(default = "default_r_max")]
        r_max: u32,
    },
    /// Solari-Kochetov cancellation report: residual scaling in hbar.
    VerifySk {
        twice_j_list: Vec<u32>,
        #[serde(default = "default_sk_samples")]
        samples: usize,
    },
    /// Structural identities: three-determinants, overcompleteness,
    /// matrix-element recursion.
    VerifyIdentities {
        #[serde(default = "default_sizes")]
        sizes: Vec<usize>,
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default = "default_quad_order")]
        quad_order: usize,
    },
    /// Floquet eigenphases, traces and eigenphase density (exact and from
    /// periodic points of the stroboscopic map). Requires a kick block.
    Floquet {
        n_max: u32,
        #[serde(default = "default_theta_points")]
        theta_points: usize,
        #[serde(default = "default_theta_sigma")]
        sigma: f64,
    },
}

fn default_samples() -> usize {
    200
}
fn default_r_max() -> u32 {
    6
}
fn default_sk_samples() -> usize {
    40
}
fn default_sizes() -> Vec<usize> {
    vec![2, 4, 6, 8, 10]
}
fn default_count() -> usize {
    200
}
fn default_quad_order() -> usize {
    128
}
fn default_theta_points() -> usize {
    400
}
fn default_theta_sigma() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericBlock {
    pub seed: u64,
    pub n_seeds: usize,
    pub t_search: f64,
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub return_threshold: f64,
    pub dedup_distance: f64,
}

impl Default for NumericBlock {
    fn default() -> Self {
        NumericBlock {
            seed: 1,
            n_seeds: 24,
            t_search: 30.0,
            newton_tol: 1e-10,
            max_iterations: 40,
            return_threshold: 0.2,
            dedup_distance: 1e-6,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// File-name prefix for all artifacts of this run.
    pub prefix: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { prefix: "run".into() }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

impl RunConfig {
    /// Build the model context; rejects dimension-cap violations before any
    /// allocation.
    pub fn context(&self) -> Result<ModelContext> {
        let m = &self.model;
        let ctx = match (m.hbar, m.j_class) {
            (Some(h), None) => ModelContext::new(m.n_sites, m.twice_j, h)?,
            (None, Some(jc)) => ModelContext::with_fixed_j_class(m.n_sites, m.twice_j, jc)?,
            _ => {
                return Err(SpinError::InvalidInput(
                    "model block must set exactly one of `hbar` / `j_class`".into(),
                ));
            }
        };
        let ctx = match m.dimension_cap {
            Some(cap) => ctx.with_dimension_cap(cap),
            None => ctx,
        };
        ctx.check_dimension()?;
        Ok(ctx)
    }

    pub fn spec(&self) -> HamiltonianSpec {
        HamiltonianSpec::new(self.model.terms.clone())
    }

    pub fn validate(&self) -> Result<ModelContext> {
        let ctx = self.context()?;
        self.spec().validate(&ctx)?;
        if let Some(kick) = &self.model.kick {
            if !(kick.t0 > 0.0) {
                return Err(SpinError::InvalidInput("kick t0 must be positive".into()));
            }
            HamiltonianSpec::new(kick.terms.clone()).validate(&ctx)?;
        }
        match &self.task {
            TaskBlock::Evolve { initial, t_final, samples } => {
                if initial.len() != ctx.n_sites {
                    return Err(SpinError::InvalidInput(format!(
                        "evolve initial condition has {} sites, model has {}",
                        initial.len(),
                        ctx.n_sites
                    )));
                }
                if !(*t_final > 0.0) || *samples < 1 {
                    return Err(SpinError::InvalidInput(
                        "evolve needs t_final > 0 and samples >= 1".into(),
                    ));
                }
            }
            TaskBlock::Orbits { energy, period_window } => {
                match (energy, period_window) {
                    (Some(_), None) => {}
                    (None, Some(w)) if w[0] < w[1] && w[0] > 0.0 => {}
                    (None, Some(_)) => {
                        return Err(SpinError::InvalidInput(
                            "orbit period window must be 0 < t_min < t_max".into(),
                        ));
                    }
                    _ => {
                        return Err(SpinError::InvalidInput(
                            "orbits task must set exactly one of `energy` / `period_window`"
                                .into(),
                        ));
                    }
                }
            }
            TaskBlock::Trace { t_min, t_max, n_points } => {
                if !(t_min < t_max) || *n_points < 2 {
                    return Err(SpinError::InvalidInput(
                        "trace grid must be strictly increasing with >= 2 points".into(),
                    ));
                }
            }
            TaskBlock::Density { e_min, e_max, n_points, sigma, semiclassical, .. } => {
                if !(e_min < e_max) || *n_points < 2 {
                    return Err(SpinError::InvalidInput(
                        "density grid must be strictly increasing with >= 2 points".into(),
                    ));
                }
                if !(*sigma >= 0.0) {
                    return Err(SpinError::InvalidInput("sigma must be >= 0".into()));
                }
                if *semiclassical && ctx.n_sites != 1 {
                    return Err(SpinError::InvalidInput(
                        "semiclassical density is implemented for one site (1 DOF)".into(),
                    ));
                }
            }
            TaskBlock::VerifySk { twice_j_list, samples } => {
                if twice_j_list.len() < 3 || *samples < 1 {
                    return Err(SpinError::InvalidInput(
                        "verify-sk needs >= 3 j values and >= 1 sample point".into(),
                    ));
                }
                if self.model.j_class.is_none() {
                    return Err(SpinError::InvalidInput(
                        "verify-sk requires `j_class` (fixed classical limit)".into(),
                    ));
                }
            }
            TaskBlock::VerifyIdentities { sizes, count, quad_order } => {
                if sizes.iter().any(|s| s % 2 != 0 || *s == 0) || *count == 0 || *quad_order < 2
                {
                    return Err(SpinError::InvalidInput(
                        "verify-identities needs even positive sizes, count >= 1, quad_order >= 2"
                            .into(),
                    ));
                }
            }
            TaskBlock::Floquet { n_max, theta_points, sigma } => {
                if self.model.kick.is_none() {
                    return Err(SpinError::InvalidInput(
                        "floquet task requires a model.kick block".into(),
                    ));
                }
                if *n_max == 0 || *theta_points < 2 || !(*sigma > 0.0) {
                    return Err(SpinError::InvalidInput(
                        "floquet needs n_max >= 1, theta_points >= 2, sigma > 0".into(),
                    ));
                }
            }
            TaskBlock::Spectrum => {}
        }
        Ok(ctx)
    }

    fn task_name(&self) -> &'static str {
        match self.task {
            TaskBlock::Spectrum => "spectrum",
            TaskBlock::Evolve { .. } => "evolve",
            TaskBlock::Orbits { .. } => "orbits",
            TaskBlock::Trace { .. } => "trace",
            TaskBlock::Density { .. } => "density",
            TaskBlock::VerifySk { .. } => "verify-sk",
            TaskBlock::VerifyIdentities { .. } => "verify-identities",
            TaskBlock::Floquet { .. } => "floquet",
        }
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// 17 significant digits; round-trips f64 exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

struct Artifacts {
    out_dir: PathBuf,
    prefix: String,
    written: Vec<String>,
}

impl Artifacts {
    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let file = format!("{}_{name}.csv", self.prefix);
        let mut body = String::new();
        body.push_str(&header.join(","));
        body.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        fs::write(self.out_dir.join(&file), body)
            .map_err(|e| SpinError::InvalidInput(format!("cannot write {file}: {e}")))?;
        self.written.push(file);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let file = format!("{}_{name}.json", self.prefix);
        let body = serde_json::to_string_pretty(value)
            .map_err(|e| SpinError::InvalidInput(e.to_string()))?;
        fs::write(self.out_dir.join(&file), body)
            .map_err(|e| SpinError::InvalidInput(format!("cannot write {file}: {e}")))?;
        self.written.push(file);
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'a str,
    task: &'a str,
    config_path: String,
    config_sha256: String,
    seed: u64,
    threads: Option<usize>,
    outputs: &'a [String],
    timings_ms: &'a BTreeMap<String, u128>,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Run a config file end to end. Returns the process exit code: 0 success,
/// 2 validation error, 3 numeric failure. Nothing is written on exit 2.
pub fn run(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> i32 {
    if let Some(t) = threads {
        // Ignore the error if a global pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    let raw = match fs::read_to_string(config_path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return EXIT_VALIDATION;
        }
    };
    let mut config: RunConfig = match toml::from_str(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return EXIT_VALIDATION;
        }
    };
    if let Some(seed) = seed_override {
        config.numeric.seed = seed;
    }
    let ctx = match config.validate() {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return EXIT_VALIDATION;
    }

    let mut artifacts = Artifacts {
        out_dir: out_dir.to_path_buf(),
        prefix: config.output.prefix.clone(),
        written: Vec::new(),
    };
    let mut timings: BTreeMap<String, u128> = BTreeMap::new();
    let started = Instant::now();
    let result = execute(&config, &ctx, &mut artifacts, &mut timings);
    timings.insert("total".into(), started.elapsed().as_millis());

    match result {
        Ok(()) => {
            let manifest = Manifest {
                crate_version: env!("CARGO_PKG_VERSION"),
                task: config.task_name(),
                config_path: config_path.display().to_string(),
                config_sha256: hex_digest(&raw),
                seed: config.numeric.seed,
                threads,
                outputs: &artifacts.written,
                timings_ms: &timings,
            };
            let value = serde_json::to_value(&manifest).expect("manifest serializes");
            if let Err(e) = artifacts.json("manifest", &value) {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERIC
        }
    }
}

fn hex_digest(raw: &str) -> String {
    let digest = Sha256::digest(raw.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Task execution
// ---------------------------------------------------------------------------

fn execute(
    config: &RunConfig,
    ctx: &ModelContext,
    artifacts: &mut Artifacts,
    timings: &mut BTreeMap<String, u128>,
) -> Result<()> {
    let spec = config.spec();
    let numeric = &config.numeric;
    let stage = Instant::now();
    match &config.task {
        TaskBlock::Spectrum => {
            let exact = ExactModel::new(&spec, ctx)?;
            let rows: Vec<Vec<f64>> = exact
                .spectrum()
                .iter()
                .enumerate()
                .map(|(i, &e)| vec![i as f64, e])
                .collect();
            artifacts.csv("spectrum", &cols(&["index", "energy"]), &rows)?;
        }
        TaskBlock::Evolve { initial, t_final, samples } => {
            let h = ClassicalHamiltonian::new(&spec, ctx)?;
            let angles: Vec<(f64, f64)> = initial.iter().map(|a| (a[0], a[1])).collect();
            let mut state = ClassicalState::from_angles(&angles);
            let dt = t_final / *samples as f64;
            let opts = EvolveOptions::default();
            let mut header = vec!["t".to_string()];
            for i in 0..ctx.n_sites {
                header.push(format!("theta{i}"));
                header.push(format!("phi{i}"));
            }
            header.push("energy".into());
            let mut rows = Vec::with_capacity(samples + 1);
            for k in 0..=*samples {
                let mut row = vec![k as f64 * dt];
                for (theta, phi) in state.to_angles() {
                    row.push(theta);
                    row.push(phi);
                }
                row.push(h.eval(&state)?.re);
                rows.push(row);
                if k < *samples {
                    state = evolve(&h, &state, 0.0, dt, &opts)?.final_state;
                }
            }
            artifacts.csv("trajectory", &header, &rows)?;
        }
        TaskBlock::Orbits { energy, period_window } => {
            let h = ClassicalHamiltonian::new(&spec, ctx)?;
            let window = match (energy, period_window) {
                (Some(e), None) => SearchWindow::Energy(*e),
                (None, Some(w)) => SearchWindow::PeriodRange(w[0], w[1]),
                _ => unreachable!("validated"),
            };
            let cfg = OrbitSearchConfig {
                n_seeds: numeric.n_seeds,
                rng_seed: numeric.seed,
                t_search: numeric.t_search,
                newton_tol: numeric.newton_tol,
                max_iterations: numeric.max_iterations,
                return_threshold: numeric.return_threshold,
                dedup_distance: numeric.dedup_distance,
                section: None,
            };
            let orbits = find_periodic_orbits(&h, window, &cfg)?;
            // Columns: T, T_P, r, E, S, k, Lambda pairs, G; sorted by T.
            let n_lambda = ctx.n_sites.saturating_sub(1);
            let mut header =
                cols(&["T", "T_P", "r", "E", "S", "k"]);
            for i in 0..n_lambda {
                header.push(format!("lambda{i}_re"));
                header.push(format!("lambda{i}_im"));
            }
            header.push("G".into());
            let mut rows = Vec::new();
            for orbit in &orbits {
                let mut row = vec![
                    orbit.period,
                    orbit.primitive_period,
                    orbit.repetitions as f64,
                    orbit.energy,
                    orbit.action,
                ];
                if orbit.degenerate_family {
                    row.push(f64::NAN);
                    for _ in 0..n_lambda {
                        row.push(f64::NAN);
                        row.push(f64::NAN);
                    }
                } else {
                    let red = generalized_eigensystem(&h, orbit)?;
                    row.push(red.k);
                    for i in 0..n_lambda {
                        let l = red.lambdas.get(i).copied().unwrap_or_default();
                        row.push(l.re);
                        row.push(l.im);
                    }
                }
                row.push(maslov_phase(&h, &orbit.initial, orbit.period)?);
                rows.push(row);
            }
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            artifacts.csv("orbits", &header, &rows)?;
        }
        TaskBlock::Trace { t_min, t_max, n_points } => {
            let exact = ExactModel::new(&spec, ctx)?;
            let grid = linspace(*t_min, *t_max, *n_points);
            let rows: Vec<Vec<f64>> = time_domain_compare(&exact, &grid)?
                .into_iter()
                .map(|r| {
                    vec![
                        r.t,
                        r.exact_trace.re,
                        r.exact_trace.im,
                        r.exact_trace.norm(),
                        r.spectral_peak,
                    ]
                })
                .collect();
            artifacts.csv(
                "trace",
                &cols(&["t", "trace_re", "trace_im", "trace_abs", "spectral_peak"]),
                &rows,
            )?;
        }
        TaskBlock::Density { e_min, e_max, n_points, sigma, semiclassical, r_max } => {
            let exact = ExactModel::new(&spec, ctx)?;
            let grid = linspace(*e_min, *e_max, *n_points);
            let density = exact.density(&grid, *sigma)?;
            let rows: Vec<Vec<f64>> = density
                .grid
                .iter()
                .zip(&density.values)
                .map(|(&e, &d)| vec![e, d])
                .collect();
            artifacts.csv("density_exact", &cols(&["E", "density"]), &rows)?;
            if *semiclassical {
                let h = ClassicalHamiltonian::new(&spec, ctx)?;
                let cfg = OrbitSearchConfig {
                    n_seeds: numeric.n_seeds,
                    rng_seed: numeric.seed,
                    t_search: numeric.t_search,
                    ..OrbitSearchConfig::default()
                };
                let e_c = 0.5 * (e_min + e_max);
                let orbits = find_periodic_orbits(&h, SearchWindow::Energy(e_c), &cfg)?;
                let seed_orbit = orbits
                    .first()
                    .ok_or_else(|| SpinError::ContinuationFailed(
                        "no orbit found at the central energy".into(),
                    ))?;
                let family = orbit_family(&h, seed_orbit, &grid)?;
                let osc = density_osc(&family, ctx.hbar, *r_max, *sigma);
                let rows: Vec<Vec<f64>> = osc
                    .grid
                    .iter()
                    .zip(&osc.values)
                    .map(|(&e, &d)| vec![e, d])
                    .collect();
                artifacts.csv("density_osc", &cols(&["E", "density"]), &rows)?;
            }
        }
        TaskBlock::VerifySk { twice_j_list, samples } => {
            let j_class = ctx.j_class();
            let points = sample_points(ctx.n_sites, *samples, numeric.seed);
            let mut residuals = Vec::new();
            for &twice_j in twice_j_list {
                let cj = ModelContext::with_fixed_j_class(ctx.n_sites, twice_j, j_class)?;
                let cmp = compare_symbols(&spec, &cj, &points)?;
                residuals.push((twice_j, cmp.max_residual()));
            }
            let exact_cancellation = residuals.iter().all(|&(_, r)| r < 1e-12);
            let slope = if exact_cancellation {
                None
            } else {
                Some(verify_hprime(
                    &spec,
                    ctx.n_sites,
                    j_class,
                    twice_j_list,
                    *samples,
                    numeric.seed,
                )?)
            };
            let report = serde_json::json!({
                "j_class": j_class,
                "residual_by_twice_j": residuals
                    .iter()
                    .map(|&(tj, r)| serde_json::json!({"twice_j": tj, "max_residual": r}))
                    .collect::<Vec<_>>(),
                "exact_cancellation": exact_cancellation,
                "fitted_exponent": slope,
                "expected_exponent_window": [1.8, 2.2],
            });
            artifacts.json("verify_sk", &report)?;
        }
        TaskBlock::VerifyIdentities { sizes, count, quad_order } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(numeric.seed);
            let mut three_dets_max = 0.0f64;
            let mut invariance_max = 0.0f64;
            for &two_n in sizes {
                for _ in 0..*count {
                    let m = random_symplectic(two_n, &mut rng);
                    three_dets_max = three_dets_max.max(three_dets_check(&m)?);
                    let w = random_symplectic(two_n, &mut rng);
                    invariance_max =
                        invariance_max.max(symplectic_invariance_check(&m, &w)?);
                }
            }
            let overcompleteness = resolve_identity_check(ctx, *quad_order)?;
            let mut recursion_max = 0.0f64;
            if ctx.n_sites == 1 {
                let points: Vec<(crate::C64, crate::C64)> =
                    sample_points(1, 50, numeric.seed)
                        .into_iter()
                        .map(|(us, vs)| (us[0], vs[0]))
                        .collect();
                for m in 1..=3 {
                    recursion_max =
                        recursion_max.max(verify_recursion(&spec, ctx, m, &points)?);
                }
            }
            let report = serde_json::json!({
                "three_determinants_max_residual": three_dets_max,
                "symplectic_invariance_max_residual": invariance_max,
                "overcompleteness_residual": overcompleteness,
                "recursion_max_residual": if ctx.n_sites == 1 {
                    serde_json::json!(recursion_max)
                } else {
                    serde_json::Value::Null
                },
                "sizes": sizes,
                "samples_per_size": count,
                "quadrature_order": quad_order,
            });
            artifacts.json("verify_identities", &report)?;
        }
        TaskBlock::Floquet { n_max, theta_points, sigma } => {
            let kick = config.model.kick.as_ref().expect("validated");
            let model = DrivenModel::new(
                spec.clone(),
                HamiltonianSpec::new(kick.terms.clone()),
                kick.t0,
            )?;
            let f = build_floquet(&model, ctx)?;
            let phases = eigenphases(&f)?;
            let rows: Vec<Vec<f64>> = phases
                .iter()
                .enumerate()
                .map(|(i, &p)| vec![i as f64, p])
                .collect();
            artifacts.csv("eigenphases", &cols(&["index", "theta"]), &rows)?;

            let exact_traces = floquet_traces(&f, *n_max);
            let driven = ClassicalDriven::new(&model, ctx)?;
            let map_cfg = MapSearchConfig {
                n_seeds: numeric.n_seeds,
                rng_seed: numeric.seed,
                newton_tol: numeric.newton_tol,
                max_iterations: numeric.max_iterations,
                dedup_distance: numeric.dedup_distance.max(1e-5),
            };
            let mut trace_rows = Vec::new();
            let mut semi_traces = Vec::new();
            for n in 1..=*n_max {
                let orbits = find_map_orbits(&driven, n, &map_cfg)?;
                let semi = trace_f_semiclassical(&orbits, ctx.hbar);
                let exact = exact_traces[(n - 1) as usize];
                trace_rows.push(vec![
                    n as f64,
                    exact.re,
                    exact.im,
                    semi.re,
                    semi.im,
                    (semi - exact).norm(),
                    orbits.len() as f64,
                ]);
                semi_traces.push(semi);
            }
            artifacts.csv(
                "traces",
                &cols(&[
                    "n",
                    "exact_re",
                    "exact_im",
                    "semiclassical_re",
                    "semiclassical_im",
                    "abs_error",
                    "orbits",
                ]),
                &trace_rows,
            )?;

            let grid = linspace(0.0, 2.0 * std::f64::consts::PI, *theta_points);
            let dim = ctx.total_dim() as f64;
            let exact_density = eigenphase_density(&phases, dim, &grid, *sigma);
            let po_density = eigenphase_density_po(&semi_traces, dim, &grid);
            let rows: Vec<Vec<f64>> = grid
                .iter()
                .enumerate()
                .map(|(i, &th)| vec![th, exact_density.values[i], po_density.values[i]])
                .collect();
            artifacts.csv(
                "eigenphase_density",
                &cols(&["theta", "exact", "periodic_orbit"]),
                &rows,
            )?;
        }
    }
    timings.insert(config.task_name().into(), stage.elapsed().as_millis());
    Ok(())
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + i as f64 * step).collect()
}
