//! Forward solver: travel times from axial point sources and geodesic tracing.

mod fmm;
mod geodesic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fmm::{solve_eikonal, solve_eikonal_at, FmmOptions, TravelTimeTable};
pub use geodesic::{trace_geodesic, CylField, GeodesicState};

use crate::geometry::{sample_cart_to_cyl, CylGrid, GeometryError};
use crate::phantom::RefractiveField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EikonalError {
    #[error("source ({x}, {y}, {z}) lies outside the grid")]
    SourceOutside { x: f64, y: f64, z: f64 },
    #[error("geodesic returned to the axis at arc length {s}")]
    AxisSingularity { s: f64 },
    #[error("step size underflow at arc length {s}")]
    Stiff { s: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Travel-time tables for several sources, solved in parallel.
pub fn solve_sources(
    field: &RefractiveField,
    z0s: &[f64],
    opts: &FmmOptions,
) -> Result<Vec<TravelTimeTable>, EikonalError> {
    z0s.par_iter().map(|&z0| solve_eikonal_at(field, [0.0, 0.0, z0], opts)).collect()
}

/// Result of the radial monotonicity scan of travel times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Smallest forward r-difference quotient of tau over all nodes and sources.
    pub min_tau_r: f64,
    /// Lower bound `eps / sqrt(eps^2 + B^2)`.
    pub c: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Minimum r-difference quotient of tau on the cylindrical grid, compared to `c - tol`.
pub fn monotonicity_check(
    tables: &[TravelTimeTable],
    grid: &CylGrid,
    tol: f64,
) -> Result<MonotonicityReport, EikonalError> {
    let r = grid.r_nodes();
    let mins = tables
        .par_iter()
        .map(|t| -> Result<f64, EikonalError> {
            let s = sample_cart_to_cyl(&t.tau, &t.grid, grid)?;
            let mut lo = f64::INFINITY;
            for m in 0..grid.nr() - 1 {
                for i in 0..grid.n_phi {
                    for j in 0..grid.nz() {
                        let d = (s[grid.index(m + 1, i, j)] - s[grid.index(m, i, j)]) / (r[m + 1] - r[m]);
                        lo = lo.min(d);
                    }
                }
            }
            Ok(lo)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_tau_r = mins.into_iter().fold(f64::INFINITY, f64::min);
    let c = grid.spec.monotonicity_constant();
    Ok(MonotonicityReport { min_tau_r, c, tolerance: tol, holds: min_tau_r >= c - tol })
}
