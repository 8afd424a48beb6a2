//! Stereographic charts on the sphere and angle conversions.
//!
//! The standard chart is `U = e^{-i phi} cot(theta/2)`, singular at the north
//! pole (theta = 0). The inverted chart uses the reciprocal coordinate
//! `1/U = e^{i phi} tan(theta/2)`, singular at the south pole. A site is
//! switched to the other chart whenever its coordinate magnitude exceeds
//! [`CHART_SWITCH_RADIUS`], so no infinity is ever materialized.

use crate::C64;
use serde::{Deserialize, Serialize};

/// Coordinate magnitude at which a site is moved to the antipodal chart.
pub const CHART_SWITCH_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Standard,
    Inverted,
}

/// Chart-aware coordinates for one site: `(u, v)` live on `chart`.
/// A point is real when `v = conj(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteCoord {
    pub u: C64,
    pub v: C64,
    pub chart: Chart,
}

impl SiteCoord {
    pub fn real(u: C64, chart: Chart) -> Self {
        SiteCoord { u, v: u.conj(), chart }
    }

    /// Flip to the antipodal chart, keeping the physical point fixed.
    pub fn flipped(&self) -> SiteCoord {
        SiteCoord {
            u: 1.0 / self.u,
            v: 1.0 / self.v,
            chart: match self.chart {
                Chart::Standard => Chart::Inverted,
                Chart::Inverted => Chart::Standard,
            },
        }
    }

    /// Whether this site should switch charts.
    pub fn needs_switch(&self) -> bool {
        self.u.norm() > CHART_SWITCH_RADIUS || self.v.norm() > CHART_SWITCH_RADIUS
    }

    /// Complex unit-vector components (n1, n2, n3) by the substitution rules.
    pub fn unit_vector(&self) -> [C64; 3] {
        let (u, v) = (self.u, self.v);
        let d = C64::new(1.0, 0.0) + u * v;
        let i = C64::new(0.0, 1.0);
        match self.chart {
            Chart::Standard => [(u + v) / d, (v - u) / (i * d), (u * v - 1.0) / d],
            // With (a, b) = (1/U, 1/V) the n2 and n3 rules change sign.
            Chart::Inverted => [(u + v) / d, (u - v) / (i * d), (1.0 - u * v) / d],
        }
    }

    /// `1 + U V` in physical (standard-chart) variables.
    pub fn one_plus_uv_physical(&self) -> C64 {
        let d = C64::new(1.0, 0.0) + self.u * self.v;
        match self.chart {
            Chart::Standard => d,
            Chart::Inverted => d / (self.u * self.v),
        }
    }
}

/// Chart coordinate for the spherical angles; picks the chart that keeps the
/// coordinate bounded. Never emits an infinity.
pub fn angles_to_coord(theta: f64, phi: f64) -> SiteCoord {
    let half = theta / 2.0;
    let phase = C64::new(0.0, -phi).exp();
    let cot = half.cos() / half.sin();
    if cot.is_finite() && cot.abs() <= CHART_SWITCH_RADIUS {
        SiteCoord::real(phase * cot, Chart::Standard)
    } else {
        // 1/U = e^{i phi} tan(theta/2)
        SiteCoord::real(phase.conj() * (half.sin() / half.cos()), Chart::Inverted)
    }
}

/// Spherical angles of a real chart point; `phi` in (-pi, pi].
pub fn coord_to_angles(c: &SiteCoord) -> (f64, f64) {
    let n = c.unit_vector();
    let n3 = n[2].re.clamp(-1.0, 1.0);
    let theta = n3.acos();
    let phi = n[1].re.atan2(n[0].re);
    (theta, phi)
}
