//! Travel-time tomography in a vertical cylinder.
//!
//! The pipeline builds a refractive-index phantom, computes first-arrival
//! travel times from axial point sources by fast marching, extracts the
//! surface traces, and recovers the index inside the cylinder by minimising
//! an exponentially weighted least-squares functional over a truncated
//! expansion in an orthonormal exponential-polynomial basis.

// Index loops mirror the grid formulas; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod dd;
pub mod eikonal;
pub mod experiment;
pub mod geometry;
pub mod inversion;
pub mod io;
pub mod observations;
pub mod phantom;
pub mod quadrature;
pub mod spline;
