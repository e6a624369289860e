//! Reference coefficients from known travel times, for validation and truncation metrics.

use rayon::prelude::*;

use super::field::SemiDiscreteField;
use super::InversionError;
use crate::basis::BasisSet;
use crate::eikonal::TravelTimeTable;
use crate::geometry::{cyl_to_cart, CylGrid};
use crate::observations::source_quadrature;
use crate::spline::natural_derivatives;

/// `u = tau_r^2` at every node and source, indexed `(node * L + l)`.
///
/// Travel times are interpolated onto the r-lines of `grid` and
/// differentiated by a natural cubic spline.
pub fn sample_u(tables: &[TravelTimeTable], grid: &CylGrid) -> Result<(Vec<f64>, Vec<f64>), InversionError> {
    let z0s = grid.z_nodes();
    let nl = z0s.len();
    let mut ordered = Vec::with_capacity(nl);
    for &z0 in &z0s {
        let t = tables
            .iter()
            .find(|t| (t.source_z0 - z0).abs() < 1e-9)
            .ok_or_else(|| InversionError::Mismatch(format!("no table for z0 = {z0}")))?;
        ordered.push(t);
    }
    let r = grid.r_nodes();
    let nz = grid.nz();
    let lines: Vec<Vec<f64>> = (0..grid.n_phi * nz)
        .into_par_iter()
        .map(|col| -> Result<Vec<f64>, InversionError> {
            let (i, j) = (col / nz, col % nz);
            let mut out = vec![0.0; r.len() * nl];
            for (l, t) in ordered.iter().enumerate() {
                let mut tau = Vec::with_capacity(r.len());
                for &rm in r {
                    let (x, y, z) = cyl_to_cart(rm, grid.phi(i), grid.z(j));
                    tau.push(t.grid.interpolate(&t.tau, x, y, z)?);
                }
                for (m, d) in natural_derivatives(r, &tau).into_iter().enumerate() {
                    out[m * nl + l] = d * d;
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let mut u = vec![0.0; grid.len() * nl];
    for (col, line) in lines.iter().enumerate() {
        let (i, j) = (col / nz, col % nz);
        for m in 0..r.len() {
            let k = grid.index(m, i, j) * nl;
            u[k..k + nl].copy_from_slice(&line[m * nl..(m + 1) * nl]);
        }
    }
    Ok((z0s, u))
}

/// `u = r^2 / (r^2 + (z - z0)^2)` of the unit medium, indexed `(node * L + l)`.
pub fn homogeneous_u(grid: &CylGrid) -> (Vec<f64>, Vec<f64>) {
    let z0s = grid.z_nodes();
    let nl = z0s.len();
    let mut u = vec![0.0; grid.len() * nl];
    for (m, &r) in grid.r_nodes().iter().enumerate() {
        for i in 0..grid.n_phi {
            for j in 0..grid.nz() {
                let k = grid.index(m, i, j) * nl;
                for (l, &z0) in z0s.iter().enumerate() {
                    let dz = grid.z(j) - z0;
                    u[k + l] = r * r / (r * r + dz * dz);
                }
            }
        }
    }
    (z0s, u)
}

/// Projects sampled `u` onto the basis at every node.
pub fn project_u(
    grid: &CylGrid,
    basis: &BasisSet,
    z0s: &[f64],
    u: &[f64],
) -> Result<SemiDiscreteField, InversionError> {
    let quad = source_quadrature(z0s);
    let nl = z0s.len();
    let n = basis.len();
    let mut v = SemiDiscreteField::zeros(grid, n);
    for (node, out) in v.values.chunks_mut(n).enumerate() {
        let c = basis
            .project(&quad, &u[node * nl..(node + 1) * nl])
            .map_err(|e| InversionError::Mismatch(e.to_string()))?;
        out.copy_from_slice(&c);
    }
    Ok(v)
}

/// `|u_N| / |u|` over all nodes and sources, with volume weight `r` in r and
/// the source quadrature in z0.
pub fn truncation_ratio(grid: &CylGrid, basis: &BasisSet, z0s: &[f64], u: &[f64]) -> Result<f64, InversionError> {
    let v = project_u(grid, basis, z0s, u)?;
    let quad = source_quadrature(z0s);
    let nl = z0s.len();
    let rw = grid.r_weights();
    let r = grid.r_nodes();
    let zw = crate::quadrature::simpson_weights(&grid.z_nodes());
    let psi: Vec<Vec<f64>> = z0s.iter().map(|&z0| basis.values_at(z0)).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for m in 0..grid.nr() {
        for i in 0..grid.n_phi {
            for j in 0..grid.nz() {
                let w = rw[m] * r[m] * zw[j];
                let node = grid.index(m, i, j);
                let coeffs = v.node(m, i, j);
                for l in 0..nl {
                    let un: f64 = coeffs.iter().zip(&psi[l]).map(|(a, b)| a * b).sum();
                    num += w * quad.weights[l] * un * un;
                    den += w * quad.weights[l] * u[node * nl + l].powi(2);
                }
            }
        }
    }
    Ok((num / den).sqrt())
}
