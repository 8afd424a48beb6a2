use thiserror::Error;

/// Errors shared by the quantum and classical halves of the crate.
#[derive(Debug, Error)]
pub enum SpinError {
    #[error("site index {site} out of range for chain of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("Hilbert-space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("coherent-state overlap vanishes: |1 + u v| = {magnitude:.3e} at site {site}")]
    OverlapZero { site: usize, magnitude: f64 },

    #[error("chart singularity: |1 + u v| = {magnitude:.3e} at site {site}")]
    ChartSingularity { site: usize, magnitude: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix block is singular: {0}")]
    SingularBlock(String),

    #[error("monodromy matrix lacks the expected unit eigenvalue (closest |lambda - 1| = {0:.3e})")]
    MissingUnitEigenvalue(f64),

    #[error("orbit family is isochronous (k = dT/dE = {0:.3e}); excluded from trace sums")]
    IsochronousFamily(f64),

    #[error("orbit continuation in energy failed: {0}")]
    ContinuationFailed(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear algebra backend error: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for SpinError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        SpinError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SpinError>;
