//! Conformal chart models for the three constant-curvature reference
//! geometries, plus the flat periodic cell.
//!
//! A closed surface is conformally a quotient of the plane, sphere, or
//! hyperbolic disk; on a single chart the metric is `ds² = λ(x)·|dx|²`
//! with density λ equal to 1 (flat), 4/(1+|x|²)² (round sphere under
//! stereographic projection), or 4/(1−|x|²)² (Poincaré disk). The torus
//! chart realizes periodization exactly; disk charts are truncated with a
//! Dirichlet wall at |x| = R0. All downstream modules consume only the
//! chart window, the wrap rule, and λ.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    TorusCell,
    DiskEuclidean,
    DiskSpherical,
    DiskHyperbolic,
}

impl ChartKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, ChartKind::TorusCell)
    }

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::TorusCell => "torus-cell",
            ChartKind::DiskEuclidean => "disk-euclidean",
            ChartKind::DiskSpherical => "disk-spherical",
            ChartKind::DiskHyperbolic => "disk-hyperbolic",
        }
    }
}

/// Where eigenfunction mass is observed. Radii are measured from the chart
/// origin with the chart's own distance (wrapped on the torus).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObservationRegion {
    InteriorBall {
        #[serde(rename = "R")]
        r: f64,
    },
    BoundaryAnnulus {
        #[serde(rename = "R")]
        r: f64,
        #[serde(rename = "R2")]
        r2: f64,
    },
}

impl ObservationRegion {
    /// Outermost radius the region touches.
    pub fn outer_radius(&self) -> f64 {
        match *self {
            ObservationRegion::InteriorBall { r } => r,
            ObservationRegion::BoundaryAnnulus { r2, .. } => r2,
        }
    }

    pub fn contains_radius(&self, d: f64) -> bool {
        match *self {
            ObservationRegion::InteriorBall { r } => d < r,
            ObservationRegion::BoundaryAnnulus { r, r2 } => d > r && d < r2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartModel {
    pub kind: ChartKind,
    /// Chart radius for disks; half-period for the torus cell.
    pub r0: f64,
    pub observation: ObservationRegion,
}

/// Metric density λ with its range over the chart. `lambda_min > 0` is what
/// makes the folded potential (V−E)/λ bounded whenever V is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalFactor {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn make_chart(kind: ChartKind, r0: f64, observation: ObservationRegion) -> Result<ChartModel> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::BadChartRadius(r0));
    }
    if kind == ChartKind::DiskHyperbolic && r0 >= 1.0 {
        return Err(Error::HyperbolicPoleInsideChart(r0));
    }
    let ordered = match observation {
        ObservationRegion::InteriorBall { r } => 0.0 < r && r < r0,
        ObservationRegion::BoundaryAnnulus { r, r2 } => 0.0 < r && r < r2 && r2 <= r0,
    };
    if !ordered {
        return Err(Error::Config(format!(
            "observation radii out of order for chart R0 = {r0}: {observation:?}"
        )));
    }
    Ok(ChartModel { kind, r0, observation })
}

impl ChartModel {
    /// Full period of the torus cell (its window is [0, 2·R0)²).
    pub fn period(&self) -> f64 {
        2.0 * self.r0
    }

    /// Lower-left corner of the coordinate window covered by grids on this
    /// chart: [0, 2R0)² for the torus, [−R0, R0]² for disks.
    pub fn window_origin(&self) -> (f64, f64) {
        if self.kind.is_periodic() {
            (0.0, 0.0)
        } else {
            (-self.r0, -self.r0)
        }
    }

    /// Side length of the coordinate window (always 2·R0).
    pub fn window_side(&self) -> f64 {
        2.0 * self.r0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self.kind {
            ChartKind::TorusCell => true, // wraps
            _ => x.hypot(y) <= self.r0 + 1e-12 * self.r0,
        }
    }

    /// Distance from the chart origin, wrapped on the torus. This is the
    /// radius used by observation regions and by the perforation arena.
    pub fn dist_from_origin(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            ChartKind::TorusCell => {
                let p = self.period();
                let dx = wrap_coord(x, p).min(p - wrap_coord(x, p));
                let dy = wrap_coord(y, p).min(p - wrap_coord(y, p));
                dx.hypot(dy)
            }
            _ => x.hypot(y),
        }
    }

    /// Shortest displacement between two points (wrapped per-axis on the
    /// torus); returns (dx, dy) with q + (dx, dy) ≡ p.
    pub fn displacement(&self, px: f64, py: f64, qx: f64, qy: f64) -> (f64, f64) {
        let mut dx = px - qx;
        let mut dy = py - qy;
        if self.kind.is_periodic() {
            let p = self.period();
            dx -= p * (dx / p).round();
            dy -= p * (dy / p).round();
        }
        (dx, dy)
    }

    pub fn dist(&self, px: f64, py: f64, qx: f64, qy: f64) -> f64 {
        let (dx, dy) = self.displacement(px, py, qx, qy);
        dx.hypot(dy)
    }

    pub fn conformal_factor_at(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(Error::PointOutsideChart(x, y));
        }
        let r2 = x * x + y * y;
        Ok(match self.kind {
            ChartKind::TorusCell | ChartKind::DiskEuclidean => 1.0,
            ChartKind::DiskSpherical => 4.0 / (1.0 + r2).powi(2),
            ChartKind::DiskHyperbolic => 4.0 / (1.0 - r2).powi(2),
        })
    }

    /// Range of λ over the chart. Both spherical and hyperbolic densities are
    /// radial and monotone, so the extremes sit at the origin and the rim.
    pub fn conformal_factor(&self) -> ConformalFactor {
        let at_origin = 4.0;
        match self.kind {
            ChartKind::TorusCell | ChartKind::DiskEuclidean => ConformalFactor {
                lambda_min: 1.0,
                lambda_max: 1.0,
            },
            ChartKind::DiskSpherical => ConformalFactor {
                lambda_min: 4.0 / (1.0 + self.r0 * self.r0).powi(2),
                lambda_max: at_origin,
            },
            ChartKind::DiskHyperbolic => ConformalFactor {
                lambda_min: at_origin,
                lambda_max: 4.0 / (1.0 - self.r0 * self.r0).powi(2),
            },
        }
    }

    /// Canonical representative of a point in the fundamental cell
    /// [0, 2·R0)². Idempotent; torus charts only.
    pub fn wrap_point(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if self.kind != ChartKind::TorusCell {
            return Err(Error::Config(format!(
                "wrap_point needs a torus-cell chart, got {}",
                self.kind.name()
            )));
        }
        let p = self.period();
        Ok((wrap_coord(x, p), wrap_coord(y, p)))
    }
}

/// Reduce a coordinate modulo `period` into [0, period).
fn wrap_coord(x: f64, period: f64) -> f64 {
    let mut w = x.rem_euclid(period);
    // rem_euclid can return `period` itself when x is a tiny negative number.
    if w >= period {
        w -= period;
    }
    w
}
