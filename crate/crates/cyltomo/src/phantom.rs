//! Refractive-index phantoms: unit background with smoothed letter inclusions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CartGrid, CylGrid, CylinderSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("inclusion placement leaves the annular domain: {0}")]
    Placement(String),
    #[error("invalid inclusion: {0}")]
    Invalid(String),
    #[error("field has {got} values, grid expects {expected}")]
    SizeMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    LetterB,
    LetterO,
    /// Solid ball, kept for debugging.
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Letter drawn in the horizontal plane through the centre.
    Horizontal,
    /// Letter drawn in the vertical plane `x = centre.x`.
    Vertical,
    /// Vertical-plane letter stretched along y.
    YElongated,
}

/// Placement and contrast of one inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionSpec {
    pub shape: Shape,
    pub orientation: Orientation,
    /// Index inside the inclusion core, `> 1`.
    pub contrast: f64,
    /// Width of the smoothstep blend, in length units.
    pub smoothing_width: f64,
    pub center: [f64; 3],
    /// Uniform scale of the canonical letter.
    pub scale: f64,
}

impl InclusionSpec {
    /// Vertical letter B centred at `(0.5, 0, 0.5)`.
    pub fn letter_b_vertical(contrast: f64) -> Self {
        InclusionSpec {
            shape: Shape::LetterB,
            orientation: Orientation::Vertical,
            contrast,
            smoothing_width: 0.05,
            center: [0.5, 0.0, 0.5],
            scale: 1.0,
        }
    }

    /// Horizontal letter B centred at `(0.45, 0, 0.5)`.
    pub fn letter_b_horizontal(contrast: f64) -> Self {
        InclusionSpec {
            shape: Shape::LetterB,
            orientation: Orientation::Horizontal,
            contrast,
            smoothing_width: 0.05,
            center: [0.45, 0.0, 0.5],
            scale: 1.0,
        }
    }

    /// Letter O stretched along y, centred at `(0.5, 0, 0.5)`.
    pub fn letter_o(contrast: f64) -> Self {
        InclusionSpec {
            shape: Shape::LetterO,
            orientation: Orientation::YElongated,
            contrast,
            smoothing_width: 0.05,
            center: [0.5, 0.0, 0.5],
            scale: 1.0,
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        if !(self.contrast > 1.0) || !self.contrast.is_finite() {
            return Err(PhantomError::Invalid(format!("contrast {} must exceed 1", self.contrast)));
        }
        if !(self.smoothing_width > 0.0) || !(self.scale > 0.0) {
            return Err(PhantomError::Invalid("smoothing width and scale must be positive".into()));
        }
        Ok(())
    }

    /// Local frame `(a, b, c)`: letter plane coordinates and extrusion axis.
    fn local(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let [cx, cy, cz] = self.center;
        let s = self.scale;
        match self.orientation {
            Orientation::Vertical | Orientation::YElongated => ((y - cy) / s, (z - cz) / s, (x - cx) / s),
            Orientation::Horizontal => ((y - cy) / s, (x - cx) / s, (z - cz) / s),
        }
    }

    /// Approximate signed distance to the inclusion core (negative inside).
    pub fn signed_distance(&self, x: f64, y: f64, z: f64) -> f64 {
        let (a, b, c) = self.local(x, y, z);
        let d = match self.shape {
            Shape::LetterB => {
                let plane = letter_b(a, b);
                plane.max(c.abs() - LETTER_HALF_THICKNESS)
            }
            Shape::LetterO => {
                let (ra, rb) = match self.orientation {
                    Orientation::YElongated => (0.3, 0.2),
                    _ => (0.25, 0.25),
                };
                let rho = ((a / ra).powi(2) + (b / rb).powi(2)).sqrt();
                let ring = ((rho - 1.0) * ra.min(rb)).abs() - STROKE / 2.0;
                ring.max(c.abs() - LETTER_HALF_THICKNESS)
            }
            Shape::Ball => (a * a + b * b + c * c).sqrt() - 0.15,
        };
        d * self.scale
    }

    /// Index at a point: `1 + (c_a - 1) smoothstep(1/2 - d / width)`.
    pub fn index_at(&self, spec: &CylinderSpec, x: f64, y: f64, z: f64) -> f64 {
        if x.hypot(y) < spec.eps {
            return 1.0;
        }
        let d = self.signed_distance(x, y, z);
        1.0 + (self.contrast - 1.0) * smoothstep(0.5 - d / self.smoothing_width)
    }

    /// Axis-aligned box containing every point with index above 1.
    pub fn support_box(&self) -> ([f64; 3], [f64; 3]) {
        let (ha, hb, hc) = match self.shape {
            Shape::LetterB => (LETTER_WIDTH / 2.0, LETTER_HEIGHT / 2.0, LETTER_HALF_THICKNESS),
            Shape::LetterO => {
                let (ra, rb) = match self.orientation {
                    Orientation::YElongated => (0.3, 0.2),
                    _ => (0.25, 0.25),
                };
                (ra + STROKE / 2.0, rb + STROKE / 2.0, LETTER_HALF_THICKNESS)
            }
            Shape::Ball => (0.15, 0.15, 0.15),
        };
        let pad = 0.5 * self.smoothing_width;
        let (ha, hb, hc) = (ha * self.scale + pad, hb * self.scale + pad, hc * self.scale + pad);
        let half = match self.orientation {
            Orientation::Vertical | Orientation::YElongated => [hc, ha, hb],
            Orientation::Horizontal => [hb, ha, hc],
        };
        let c = self.center;
        ([c[0] - half[0], c[1] - half[1], c[2] - half[2]], [c[0] + half[0], c[1] + half[1], c[2] + half[2]])
    }

    /// Checks that the support lies strictly inside `eps < r < R, 0 < z < B`.
    pub fn check_placement(&self, spec: &CylinderSpec) -> Result<(), PhantomError> {
        let (lo, hi) = self.support_box();
        let near_x = 0.0f64.clamp(lo[0], hi[0]);
        let near_y = 0.0f64.clamp(lo[1], hi[1]);
        let r_min = near_x.hypot(near_y);
        let far_x = lo[0].abs().max(hi[0].abs());
        let far_y = lo[1].abs().max(hi[1].abs());
        let r_max = far_x.hypot(far_y);
        if r_min <= spec.eps {
            return Err(PhantomError::Placement(format!("support reaches r = {r_min:.4} <= eps")));
        }
        if r_max >= spec.r {
            return Err(PhantomError::Placement(format!("support reaches r = {r_max:.4} >= R")));
        }
        if lo[2] <= 0.0 || hi[2] >= spec.b {
            return Err(PhantomError::Placement(format!("support spans z in [{:.4}, {:.4}]", lo[2], hi[2])));
        }
        Ok(())
    }
}

const LETTER_HEIGHT: f64 = 0.5;
const LETTER_WIDTH: f64 = 0.35;
const STROKE: f64 = 0.08;
const LETTER_HALF_THICKNESS: f64 = 0.08;

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn box_sdf(a: f64, b: f64, ca: f64, cb: f64, ha: f64, hb: f64) -> f64 {
    let qa = (a - ca).abs() - ha;
    let qb = (b - cb).abs() - hb;
    qa.max(0.0).hypot(qb.max(0.0)) + qa.max(qb).min(0.0)
}

/// Letter B as a union of strokes: a stem, three bars and two bowls' right sides.
fn letter_b(a: f64, b: f64) -> f64 {
    let (h, w, t) = (LETTER_HEIGHT, LETTER_WIDTH, STROKE);
    let boxes = [
        (-w / 2.0 + t / 2.0, 0.0, t / 2.0, h / 2.0),
        (0.0, h / 2.0 - t / 2.0, w / 2.0, t / 2.0),
        (0.0, 0.0, w / 2.0, t / 2.0),
        (0.0, -h / 2.0 + t / 2.0, w / 2.0, t / 2.0),
        (w / 2.0 - t / 2.0, h / 4.0, t / 2.0, h / 4.0),
        (w / 2.0 - t / 2.0, -h / 4.0, t / 2.0, h / 4.0),
    ];
    boxes.iter().map(|&(ca, cb, ha, hb)| box_sdf(a, b, ca, cb, ha, hb)).fold(f64::INFINITY, f64::min)
}

/// Index values on the nodes of a Cartesian grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefractiveField {
    pub grid: CartGrid,
    pub values: Vec<f64>,
}

impl RefractiveField {
    pub fn constant(grid: CartGrid, value: f64) -> Self {
        let values = vec![value; grid.len()];
        RefractiveField { grid, values }
    }

    /// Field from a closure of `(x, y, z)`.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(grid: CartGrid, f: F) -> Self {
        let mut values = vec![0.0; grid.len()];
        for ix in 0..grid.m {
            for iy in 0..grid.m {
                for iz in 0..grid.m_z {
                    let (x, y, z) = grid.point(ix, iy, iz);
                    values[grid.index(ix, iy, iz)] = f(x, y, z);
                }
            }
        }
        RefractiveField { grid, values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Samples an inclusion on a Cartesian grid.
pub fn build_phantom(
    spec: &InclusionSpec,
    cyl: &CylinderSpec,
    grid: &CartGrid,
) -> Result<RefractiveField, PhantomError> {
    spec.validate()?;
    spec.check_placement(cyl)?;
    Ok(RefractiveField::from_fn(grid.clone(), |x, y, z| spec.index_at(cyl, x, y, z)))
}

/// Fraction of cylindrical nodes whose forward r-difference quotient is `>= -1e-8 c_a`.
///
/// `values` is indexed as [`CylGrid::index`]; the outermost r-node has no
/// forward neighbour and is not counted.
pub fn radial_monotonicity_report(values: &[f64], grid: &CylGrid, contrast: f64) -> Result<f64, PhantomError> {
    if values.len() != grid.len() {
        return Err(PhantomError::SizeMismatch { got: values.len(), expected: grid.len() });
    }
    let tol = 1e-8 * contrast;
    let r = grid.r_nodes();
    let mut good = 0usize;
    let mut total = 0usize;
    for m in 0..grid.nr() - 1 {
        let h = r[m + 1] - r[m];
        for i in 0..grid.n_phi {
            for j in 0..grid.nz() {
                let d = (values[grid.index(m + 1, i, j)] - values[grid.index(m, i, j)]) / h;
                total += 1;
                if d >= -tol {
                    good += 1;
                }
            }
        }
    }
    Ok(good as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_b_has_core_and_voids() {
        assert!(letter_b(-0.15, 0.0) < 0.0);
        assert!(letter_b(0.0, 0.125) > 0.0);
        assert!(letter_b(0.0, -0.125) > 0.0);
        assert!(letter_b(0.5, 0.5) > 0.0);
    }

    #[test]
    fn smoothstep_ends() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert_eq!(smoothstep(0.5), 0.5);
    }

    #[test]
    fn placement_rejects_axis_crossing() {
        let mut s = InclusionSpec::letter_b_vertical(1.5);
        s.center = [0.0, 0.0, 0.5];
        assert!(matches!(s.check_placement(&CylinderSpec::default()), Err(PhantomError::Placement(_))));
        s.center = [0.9, 0.0, 0.5];
        assert!(s.check_placement(&CylinderSpec::default()).is_err());
        assert!(InclusionSpec::letter_b_vertical(1.5).check_placement(&CylinderSpec::default()).is_ok());
        assert!(InclusionSpec::letter_b_horizontal(1.5).check_placement(&CylinderSpec::default()).is_ok());
        assert!(InclusionSpec::letter_o(1.5).check_placement(&CylinderSpec::default()).is_ok());
    }
}
