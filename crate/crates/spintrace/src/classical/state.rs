use crate::C64;
use crate::chart::{Chart, SiteCoord, angles_to_coord, coord_to_angles};

/// Phase-space point of the N-spin classical system in chart coordinates.
///
/// A state is real when `v_i = conj(u_i)` at every site; real states map to
/// unit vectors on the spheres. General complex states (v independent of u)
/// arise in coherent-state boundary-value problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    pub sites: Vec<SiteCoord>,
}

impl ClassicalState {
    pub fn new(sites: Vec<SiteCoord>) -> Self {
        ClassicalState { sites }
    }

    /// Real state from standard-chart labels, flipping oversized coordinates.
    pub fn real_from_u(us: &[C64]) -> Self {
        ClassicalState {
            sites: us
                .iter()
                .map(|&u| {
                    let c = SiteCoord::real(u, Chart::Standard);
                    if c.needs_switch() { c.flipped() } else { c }
                })
                .collect(),
        }
    }

    /// General complex state from standard-chart labels.
    pub fn complex_from_uv(us: &[C64], vs: &[C64]) -> Self {
        assert_eq!(us.len(), vs.len());
        ClassicalState {
            sites: us
                .iter()
                .zip(vs)
                .map(|(&u, &v)| SiteCoord { u, v, chart: Chart::Standard })
                .collect(),
        }
    }

    pub fn from_angles(angles: &[(f64, f64)]) -> Self {
        ClassicalState {
            sites: angles.iter().map(|&(t, p)| angles_to_coord(t, p)).collect(),
        }
    }

    pub fn to_angles(&self) -> Vec<(f64, f64)> {
        self.sites.iter().map(coord_to_angles).collect()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn charts(&self) -> Vec<Chart> {
        self.sites.iter().map(|s| s.chart).collect()
    }

    /// Max deviation from reality, `max_i |v_i - conj(u_i)|`.
    pub fn reality_residual(&self) -> f64 {
        self.sites
            .iter()
            .map(|s| (s.v - s.u.conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.reality_residual() < tol
    }

    /// Unit vectors per site (complex in general, real for real states).
    pub fn unit_vectors(&self) -> Vec<[C64; 3]> {
        self.sites.iter().map(|s| s.unit_vector()).collect()
    }

    /// Real unit vectors, valid for real states.
    pub fn real_unit_vectors(&self) -> Vec<[f64; 3]> {
        self.sites
            .iter()
            .map(|s| {
                let n = s.unit_vector();
                [n[0].re, n[1].re, n[2].re]
            })
            .collect()
    }

    /// Distance between two real states measured through the unit vectors,
    /// immune to chart differences.
    pub fn sphere_distance(&self, other: &ClassicalState) -> f64 {
        self.real_unit_vectors()
            .iter()
            .zip(other.real_unit_vectors())
            .map(|(a, b)| {
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Flat coordinate vector `[u_0.., v_0..]` for the integrator.
    pub fn to_flat(&self) -> Vec<C64> {
        let n = self.n_sites();
        let mut y = Vec::with_capacity(2 * n);
        y.extend(self.sites.iter().map(|s| s.u));
        y.extend(self.sites.iter().map(|s| s.v));
        y
    }

    pub fn from_flat(y: &[C64], charts: &[Chart]) -> Self {
        let n = charts.len();
        ClassicalState {
            sites: (0..n)
                .map(|i| SiteCoord { u: y[i], v: y[n + i], chart: charts[i] })
                .collect(),
        }
    }
}
