use crate::error::{Result, SpinError};
use serde::{Deserialize, Serialize};

/// Default cap on the total Hilbert-space dimension for dense assembly.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Chain geometry and semiclassical scale.
///
/// The spin quantum number is stored as `twice_j` so that half-integer j is
/// exact. `j_class = hbar * (j + 1/2)` is the classical spin length; keeping it
/// fixed while `j` grows is the semiclassical limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelContext {
    pub n_sites: usize,
    pub twice_j: u32,
    pub hbar: f64,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl ModelContext {
    pub fn new(n_sites: usize, twice_j: u32, hbar: f64) -> Result<Self> {
        if n_sites == 0 {
            return Err(SpinError::InvalidInput("n_sites must be positive".into()));
        }
        if twice_j == 0 {
            return Err(SpinError::InvalidInput("twice_j must be >= 1".into()));
        }
        if !(hbar > 0.0) {
            return Err(SpinError::InvalidInput("hbar must be positive".into()));
        }
        Ok(Self {
            n_sites,
            twice_j,
            hbar,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        })
    }

    /// Context with `j_class` held fixed: `hbar = j_class / (j + 1/2)`.
    pub fn with_fixed_j_class(n_sites: usize, twice_j: u32, j_class: f64) -> Result<Self> {
        let hbar = j_class / ((twice_j as f64 + 1.0) / 2.0);
        Self::new(n_sites, twice_j, hbar)
    }

    pub fn with_dimension_cap(mut self, cap: usize) -> Self {
        self.dimension_cap = cap;
        self
    }

    /// Spin quantum number j.
    pub fn spin_j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    /// Classical spin length `hbar (j + 1/2)`.
    pub fn j_class(&self) -> f64 {
        self.hbar * (self.twice_j as f64 + 1.0) / 2.0
    }

    /// Hilbert-space dimension of a single site, `2j + 1`.
    pub fn site_dim(&self) -> usize {
        self.twice_j as usize + 1
    }

    /// Total Hilbert-space dimension `(2j + 1)^N`.
    pub fn total_dim(&self) -> usize {
        self.site_dim().pow(self.n_sites as u32)
    }

    /// Error unless the total dimension fits under the cap.
    pub fn check_dimension(&self) -> Result<usize> {
        let site = self.site_dim() as u128;
        let mut dim: u128 = 1;
        for _ in 0..self.n_sites {
            dim = dim.saturating_mul(site);
            if dim > self.dimension_cap as u128 {
                return Err(SpinError::DimensionCap {
                    dim: dim.min(usize::MAX as u128) as usize,
                    cap: self.dimension_cap,
                });
            }
        }
        Ok(dim as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_class_is_exact() {
        let ctx = ModelContext::new(2, 3, 0.5).unwrap();
        assert_eq!(ctx.spin_j(), 1.5);
        assert_eq!(ctx.j_class(), 0.5 * 2.0);
        assert_eq!(ctx.site_dim(), 4);
        assert_eq!(ctx.total_dim(), 16);
    }

    #[test]
    fn fixed_j_class_scaling() {
        for twice_j in [1u32, 10, 40, 400] {
            let ctx = ModelContext::with_fixed_j_class(1, twice_j, 2.0).unwrap();
            assert!((ctx.j_class() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let ctx = ModelContext::new(8, 2, 1.0).unwrap(); // 3^8 = 6561 > 4096
        assert!(matches!(
            ctx.check_dimension(),
            Err(SpinError::DimensionCap { .. })
        ));
        let ok = ctx.with_dimension_cap(10_000);
        assert_eq!(ok.check_dimension().unwrap(), 6561);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(ModelContext::new(0, 1, 1.0).is_err());
        assert!(ModelContext::new(1, 0, 1.0).is_err());
        assert!(ModelContext::new(1, 1, 0.0).is_err());
        assert!(ModelContext::new(1, 1, -1.0).is_err());
    }
}
