//! Recovery of the refractive index from minimised coefficients, and accuracy metrics.

use serde::{Deserialize, Serialize};

use super::field::SemiDiscreteField;
use super::functional::Functional;
use crate::geometry::{cart_to_cyl, CartGrid, CylGrid};
use crate::phantom::RefractiveField;

/// Index on the cylindrical nodes, `n = sqrt(mean over z0 of (u + Q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylIndex {
    pub grid: CylGrid,
    /// Indexed like [`CylGrid::index`].
    pub values: Vec<f64>,
    /// Nodes whose averaged `n^2` was negative and were set to 1.
    pub clipped: usize,
}

/// Evaluates `n` at every node, averaging `n^2` over the z0 samples.
pub fn index_on_grid(functional: &Functional, v: &SemiDiscreteField) -> CylIndex {
    let samples = functional.n_squared_samples(v);
    let nl = functional.sources();
    let mut clipped = 0;
    let values = samples
        .chunks(nl)
        .map(|s| {
            let mean = s.iter().sum::<f64>() / nl as f64;
            if mean < 0.0 || !mean.is_finite() {
                clipped += 1;
                1.0
            } else {
                mean.sqrt()
            }
        })
        .collect();
    CylIndex { grid: functional.grid.clone(), values, clipped }
}

impl CylIndex {
    /// Trilinear interpolation in `(r, φ, z)`, periodic in φ; 1 inside the inner cylinder.
    pub fn at(&self, r: f64, phi: f64, z: f64) -> f64 {
        let g = &self.grid;
        let rn = g.r_nodes();
        if r < rn[0] {
            return 1.0;
        }
        let r = r.min(rn[rn.len() - 1]);
        let m = match rn.iter().position(|&x| x > r) {
            Some(k) => k - 1,
            None => rn.len() - 2,
        };
        let fr = ((r - rn[m]) / (rn[m + 1] - rn[m])).clamp(0.0, 1.0);
        let s = phi.rem_euclid(2.0 * std::f64::consts::PI) / g.h_phi;
        let i = (s.floor() as usize) % g.n_phi;
        let fp = s - s.floor();
        let t = (z / g.h_z).clamp(0.0, g.n_z as f64);
        let j = (t.floor() as usize).min(g.n_z - 1);
        let fz = t - j as f64;
        let mut acc = 0.0;
        for (dm, wr) in [(0, 1.0 - fr), (1, fr)] {
            for (di, wp) in [(0, 1.0 - fp), (1, fp)] {
                for (dj, wz) in [(0, 1.0 - fz), (1, fz)] {
                    acc += wr * wp * wz * self.values[g.index(m + dm, i + di, j + dj)];
                }
            }
        }
        acc
    }

    /// Samples onto a Cartesian grid; points outside the cylinder get 1.
    pub fn to_cartesian(&self, cart: &CartGrid) -> RefractiveField {
        let (rr, bb) = (self.grid.spec.r, self.grid.spec.b);
        RefractiveField::from_fn(cart.clone(), |x, y, z| {
            let (r, phi, z) = cart_to_cyl(x, y, z);
            if r > rr + 1e-12 || z < -1e-12 || z > bb + 1e-12 {
                1.0
            } else {
                self.at(r, phi, z)
            }
        })
    }
}

/// Accuracy of a reconstruction against the true index on the Cartesian points inside the cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Maximum computed index over the points where the true index exceeds 1.
    pub computed_contrast: f64,
    pub rel_l2_error: f64,
    /// Largest `|n_comp - 1|` over the background probe points.
    pub background_linf: f64,
}

/// Compares `computed` with `truth` at Cartesian nodes with `eps <= r <= R`.
///
/// Background probes are nodes with `r >= 0.1`, `0.1 <= z <= B - 0.1` whose
/// distance to every inclusion node exceeds `margin`.
pub fn accuracy(
    computed: &RefractiveField,
    truth: &RefractiveField,
    eps: f64,
    r_max: f64,
    b: f64,
    margin: f64,
) -> Accuracy {
    let g = &computed.grid;
    let [mx, my, mz] = g.dims();
    let is_inclusion = |k: usize| truth.values[k] > 1.0 + 1e-6;
    let any_inclusion = truth.values.iter().any(|v| *v > 1.0 + 1e-6);
    let reach = (margin / g.spacing).ceil() as isize;
    let near_inclusion = |ix: usize, iy: usize, iz: usize| -> bool {
        let (x, y, z) = g.point(ix, iy, iz);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let (a, b, c) = (ix as isize + dx, iy as isize + dy, iz as isize + dz);
                    if a < 0 || b < 0 || c < 0 || a >= mx as isize || b >= my as isize || c >= mz as isize {
                        continue;
                    }
                    let (a, b, c) = (a as usize, b as usize, c as usize);
                    if is_inclusion(g.index(a, b, c)) {
                        let (px, py, pz) = g.point(a, b, c);
                        if (px - x).powi(2) + (py - y).powi(2) + (pz - z).powi(2) <= margin * margin {
                            return true;
                        }
                    }
                }
            }
        }
        false
    };
    let (mut num, mut den) = (0.0, 0.0);
    let mut contrast = f64::NEG_INFINITY;
    let mut background = 0.0f64;
    for ix in 0..mx {
        for iy in 0..my {
            for iz in 0..mz {
                let (x, y, z) = g.point(ix, iy, iz);
                let r = x.hypot(y);
                if r < eps - 1e-12 || r > r_max + 1e-12 {
                    continue;
                }
                let k = g.index(ix, iy, iz);
                let (c, t) = (computed.values[k], truth.values[k]);
                num += (c - t).powi(2);
                den += t * t;
                if is_inclusion(k) {
                    contrast = contrast.max(c);
                } else if r >= 0.1 && z >= 0.1 && z <= b - 0.1 && !near_inclusion(ix, iy, iz) {
                    background = background.max((c - 1.0).abs());
                }
            }
        }
    }
    let inclusion_empty = !any_inclusion;
    if inclusion_empty {
        contrast = computed.max();
    }
    Accuracy { computed_contrast: contrast, rel_l2_error: (num / den).sqrt(), background_linf: background }
}

/// Summary of one inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Computed index on the Cartesian grid.
    pub n_comp: RefractiveField,
    /// Maximum of `n_comp` over the inclusion (over the whole cylinder without ground truth).
    pub computed_contrast: f64,
    pub correct_contrast: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub j_history: Vec<f64>,
    pub converged: bool,
    pub truncation_ratio: Option<f64>,
    pub relative_l2_error: Option<f64>,
    pub background_linf: Option<f64>,
    /// Nodes whose averaged `n^2` was negative and were set to 1.
    pub clipped_nodes: usize,
}

/// Distance from the inclusion beyond which Cartesian nodes count as background probes.
pub const BACKGROUND_MARGIN: f64 = 0.1;

/// Evaluates the index from a minimiser and compares it with `truth` when given.
pub fn reconstruct_n(
    functional: &Functional,
    minimum: &super::minimize::Minimum,
    cart: &CartGrid,
    truth: Option<&RefractiveField>,
    correct_contrast: f64,
    truncation_ratio: Option<f64>,
) -> ReconstructionReport {
    let cyl = index_on_grid(functional, &minimum.v);
    let n_comp = cyl.to_cartesian(cart);
    let spec = functional.grid.spec;
    let acc = truth.map(|t| accuracy(&n_comp, t, spec.eps, spec.r, spec.b, BACKGROUND_MARGIN));
    let computed_contrast = match acc {
        Some(a) => a.computed_contrast,
        None => cyl.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let h = &minimum.history;
    ReconstructionReport {
        n_comp,
        computed_contrast,
        correct_contrast,
        iterations: h.iterations(),
        final_grad_norm: h.grad_norm.last().copied().unwrap_or(f64::NAN),
        j_history: h.j.clone(),
        converged: minimum.converged,
        truncation_ratio,
        relative_l2_error: acc.map(|a| a.rel_l2_error),
        background_linf: acc.map(|a| a.background_linf),
        clipped_nodes: cyl.clipped,
    }
}
