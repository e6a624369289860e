//! The semi-discrete unknown: an `N`-vector per node `(r_m, phi_i, z_j)`.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::geometry::{CylGrid, GeometryError};

/// Basis coefficients `u_0..u_{N-1}` at every stored node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiDiscreteField {
    pub grid: CylGrid,
    pub n: usize,
    /// Flat values indexed by [`SemiDiscreteField::index`].
    pub values: Vec<f64>,
}

impl SemiDiscreteField {
    pub fn zeros(grid: &CylGrid, n: usize) -> Self {
        SemiDiscreteField { grid: grid.clone(), n, values: vec![0.0; grid.len() * n] }
    }

    /// Offset of component 0 at node `(m, i, j)`; φ-index wraps.
    pub fn index(&self, m: usize, i: usize, j: usize) -> usize {
        self.grid.index(m, i, j) * self.n
    }

    pub fn node(&self, m: usize, i: usize, j: usize) -> &[f64] {
        let k = self.index(m, i, j);
        &self.values[k..k + self.n]
    }

    pub fn node_mut(&mut self, m: usize, i: usize, j: usize) -> &mut [f64] {
        let k = self.index(m, i, j);
        let n = self.n;
        &mut self.values[k..k + n]
    }

    /// `u(node, z0) = sum_s u_s Psi_s(z0)`, without clamping.
    pub fn u_of(&self, basis: &BasisSet, m: usize, i: usize, j: usize, z0: f64) -> f64 {
        basis.reconstruct(self.node(m, i, j), z0)
    }

    /// Components split into one array per basis index, in grid order.
    pub fn components(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|s| self.values.iter().skip(s).step_by(self.n).copied().collect()).collect()
    }

    /// Semi-discrete `L2` and `H1` norms.
    pub fn norms(&self) -> Result<(f64, f64), GeometryError> {
        crate::geometry::semidiscrete_norms(&self.grid, &self.components())
    }

    /// `L2` norm restricted to interior z-planes, with r-trapezoid weights.
    pub fn interior_l2(&self) -> f64 {
        let w = self.grid.r_weights();
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            for i in 0..self.grid.n_phi {
                for j in 1..self.grid.n_z {
                    acc += wm * self.node(m, i, j).iter().map(|v| v * v).sum::<f64>();
                }
            }
        }
        acc.sqrt()
    }

    pub fn dot(&self, other: &SemiDiscreteField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// `self + t * dir`.
    pub fn axpy(&self, t: f64, dir: &SemiDiscreteField) -> SemiDiscreteField {
        let mut out = self.clone();
        for (o, d) in out.values.iter_mut().zip(&dir.values) {
            *o += t * d;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
