//! Surface travel-time data: extraction, noise, smoothing and projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisSet};
use crate::eikonal::TravelTimeTable;
use crate::geometry::{cyl_to_cart, CylGrid, GeometryError};
use crate::quadrature::Quadrature;
use crate::spline::{natural_derivatives, periodic_derivatives};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing travel-time table for source z0 = {0}")]
    MissingSource(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("need at least 4 nodes along {0}")]
    TooFewNodes(&'static str),
    #[error("inconsistent data shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Travel times on the lateral surface and the two end discs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub grid: CylGrid,
    /// Source heights; one per z-plane of `grid`.
    pub z0s: Vec<f64>,
    /// `p[(l, i, j)] = tau(R, phi_i, z_j; z0_l)`.
    pub p: Vec<f64>,
    /// `p0[(l, m, i)] = tau(r_m, phi_i, 0; z0_l)`.
    pub p0: Vec<f64>,
    /// `pb[(l, m, i)] = tau(r_m, phi_i, B; z0_l)`.
    pub pb: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl BoundaryData {
    pub fn lateral_index(&self, l: usize, i: usize, j: usize) -> usize {
        (l * self.grid.n_phi + i % self.grid.n_phi) * self.grid.nz() + j
    }

    pub fn disc_index(&self, l: usize, m: usize, i: usize) -> usize {
        (l * self.grid.nr() + m) * self.grid.n_phi + i % self.grid.n_phi
    }

    fn check_shape(&self) -> Result<(), DataError> {
        let g = &self.grid;
        let nl = self.z0s.len();
        if self.p.len() != nl * g.n_phi * g.nz()
            || self.p0.len() != nl * g.nr() * g.n_phi
            || self.pb.len() != self.p0.len()
        {
            return Err(DataError::Shape(format!("{} sources on grid {}x{}x{}", nl, g.nr(), g.n_phi, g.nz())));
        }
        Ok(())
    }
}

/// Samples the surface traces from one table per z-plane of the grid.
pub fn extract_boundary_data(tables: &[TravelTimeTable], grid: &CylGrid) -> Result<BoundaryData, DataError> {
    let z0s = grid.z_nodes();
    let mut ordered = Vec::with_capacity(z0s.len());
    for &z0 in &z0s {
        let t = tables.iter().find(|t| (t.source_z0 - z0).abs() < 1e-9).ok_or(DataError::MissingSource(z0))?;
        ordered.push(t);
    }
    let r = grid.r_nodes();
    let spec = grid.spec;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = ordered
        .par_iter()
        .map(|t| -> Result<_, DataError> {
            let mut p = Vec::with_capacity(grid.n_phi * grid.nz());
            for i in 0..grid.n_phi {
                for j in 0..grid.nz() {
                    let (x, y, z) = cyl_to_cart(spec.r, grid.phi(i), grid.z(j));
                    p.push(t.grid.interpolate(&t.tau, x, y, z)?);
                }
            }
            let mut p0 = Vec::with_capacity(grid.nr() * grid.n_phi);
            let mut pb = Vec::with_capacity(grid.nr() * grid.n_phi);
            for &rm in r {
                for i in 0..grid.n_phi {
                    let (x, y, _) = cyl_to_cart(rm, grid.phi(i), 0.0);
                    p0.push(t.grid.interpolate(&t.tau, x, y, 0.0)?);
                    pb.push(t.grid.interpolate(&t.tau, x, y, spec.b)?);
                }
            }
            Ok((p, p0, pb))
        })
        .collect::<Result<_, _>>()?;
    let mut data =
        BoundaryData { grid: grid.clone(), z0s, p: Vec::new(), p0: Vec::new(), pb: Vec::new(), delta: 0.0, seed: 0 };
    for (p, p0, pb) in rows {
        data.p.extend(p);
        data.p0.extend(p0);
        data.pb.extend(pb);
    }
    Ok(data)
}

/// Multiplicative noise: Gaussian on the lateral trace, uniform on `[-1, 1]` on the discs.
pub fn add_noise(data: &BoundaryData, delta: f64, seed: u64) -> BoundaryData {
    let mut out = data.clone();
    out.delta = delta;
    out.seed = seed;
    if delta == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.p.iter_mut() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        *v *= 1.0 + delta * xi;
    }
    let uni = Uniform::new_inclusive(-1.0, 1.0);
    for v in out.p0.iter_mut() {
        *v *= 1.0 + delta * uni.sample(&mut rng);
    }
    for v in out.pb.iter_mut() {
        *v *= 1.0 + delta * uni.sample(&mut rng);
    }
    out
}

/// Spline derivatives of the data and their basis coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedData {
    pub grid: CylGrid,
    pub z0s: Vec<f64>,
    /// Number of basis functions used for the coefficients.
    pub n_basis: usize,
    /// Lateral derivatives indexed like [`BoundaryData::p`].
    pub p_phi: Vec<f64>,
    pub p_z: Vec<f64>,
    /// Radial derivatives indexed like [`BoundaryData::p0`].
    pub dp0_dr: Vec<f64>,
    pub dpb_dr: Vec<f64>,
    /// Coefficients of `p`, indexed `((i * nz + j) * N + s)`.
    pub g: Vec<f64>,
    /// Coefficients of `(dp0/dr)^2` and `(dpB/dr)^2`, indexed `((m * n_phi + i) * N + s)`.
    pub g0: Vec<f64>,
    pub gb: Vec<f64>,
}

/// Quadrature rule on the source heights used for every z0 integral.
pub fn source_quadrature(z0s: &[f64]) -> Quadrature {
    Quadrature::simpson(z0s)
}

/// Fits splines along φ (periodic), z and r (natural) and projects onto the basis.
pub fn smooth_and_differentiate(data: &BoundaryData, basis: &BasisSet) -> Result<DerivedData, DataError> {
    data.check_shape()?;
    let g = &data.grid;
    if g.n_phi < 4 {
        return Err(DataError::TooFewNodes("phi"));
    }
    if g.nz() < 4 {
        return Err(DataError::TooFewNodes("z"));
    }
    if g.nr() < 4 {
        return Err(DataError::TooFewNodes("r"));
    }
    for (name, v) in [("p", &data.p), ("p0", &data.p0), ("pB", &data.pb)] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DataError::NonFinite(name));
        }
    }
    let nl = data.z0s.len();
    let (nphi, nz, nr) = (g.n_phi, g.nz(), g.nr());
    let z = g.z_nodes();
    let r = g.r_nodes();
    let mut p_phi = vec![0.0; data.p.len()];
    let mut p_z = vec![0.0; data.p.len()];
    for l in 0..nl {
        for j in 0..nz {
            let line: Vec<f64> = (0..nphi).map(|i| data.p[data.lateral_index(l, i, j)]).collect();
            for (i, d) in periodic_derivatives(g.h_phi, &line).into_iter().enumerate() {
                p_phi[data.lateral_index(l, i, j)] = d;
            }
        }
        for i in 0..nphi {
            let base = data.lateral_index(l, i, 0);
            let d = natural_derivatives(&z, &data.p[base..base + nz]);
            p_z[base..base + nz].copy_from_slice(&d);
        }
    }
    let radial = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for l in 0..nl {
            for i in 0..nphi {
                let line: Vec<f64> = (0..nr).map(|m| v[data.disc_index(l, m, i)]).collect();
                for (m, d) in natural_derivatives(r, &line).into_iter().enumerate() {
                    out[data.disc_index(l, m, i)] = d;
                }
            }
        }
        out
    };
    let dp0_dr = radial(&data.p0);
    let dpb_dr = radial(&data.pb);

    let quad = source_quadrature(&data.z0s);
    let n = basis.len();
    let mut gp = vec![0.0; nphi * nz * n];
    for i in 0..nphi {
        for j in 0..nz {
            let f: Vec<f64> = (0..nl).map(|l| data.p[data.lateral_index(l, i, j)]).collect();
            let c = basis.project(&quad, &f)?;
            gp[(i * nz + j) * n..(i * nz + j + 1) * n].copy_from_slice(&c);
        }
    }
    let disc = |d: &[f64]| -> Result<Vec<f64>, DataError> {
        let mut out = vec![0.0; nr * nphi * n];
        for m in 0..nr {
            for i in 0..nphi {
                let f: Vec<f64> = (0..nl).map(|l| d[data.disc_index(l, m, i)].powi(2)).collect();
                let c = basis.project(&quad, &f)?;
                out[(m * nphi + i) * n..(m * nphi + i + 1) * n].copy_from_slice(&c);
            }
        }
        Ok(out)
    };
    let g0 = disc(&dp0_dr)?;
    let gb = disc(&dpb_dr)?;
    Ok(DerivedData { grid: g.clone(), z0s: data.z0s.clone(), n_basis: n, p_phi, p_z, dp0_dr, dpb_dr, g: gp, g0, gb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CylinderSpec;

    fn synthetic() -> BoundaryData {
        let grid = CylGrid::new(CylinderSpec::default(), 8, 8, 8).unwrap();
        let z0s = grid.z_nodes();
        let nl = z0s.len();
        let p = vec![1.0; nl * grid.n_phi * grid.nz()];
        let p0 = vec![2.0; nl * grid.nr() * grid.n_phi];
        BoundaryData { grid, z0s, p, pb: p0.clone(), p0, delta: 0.0, seed: 0 }
    }

    #[test]
    fn zero_noise_is_identity() {
        let d = synthetic();
        let n = add_noise(&d, 0.0, 7);
        assert_eq!(n.p, d.p);
        assert_eq!(n.p0, d.p0);
    }

    #[test]
    fn noise_is_seeded() {
        let d = synthetic();
        assert_eq!(add_noise(&d, 0.03, 5), add_noise(&d, 0.03, 5));
        assert_ne!(add_noise(&d, 0.03, 5).p, add_noise(&d, 0.03, 6).p);
    }

    #[test]
    fn non_finite_rejected() {
        let mut d = synthetic();
        d.p[3] = f64::NAN;
        let b = BasisSet::build(2, 1.0).unwrap();
        assert!(matches!(smooth_and_differentiate(&d, &b), Err(DataError::NonFinite("p"))));
    }
}
