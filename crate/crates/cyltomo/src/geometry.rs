//! Cylindrical and Cartesian domains, grids and interpolation between them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::trapezoid_weights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid cylinder: R = {r}, eps = {eps}, B = {b}")]
    InvalidCylinder { r: f64, eps: f64, b: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point ({x}, {y}, {z}) lies outside the Cartesian grid")]
    OutOfDomain { x: f64, y: f64, z: f64 },
    #[error("field has {got} values, grid expects {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("grid too coarse: {0}")]
    TooCoarse(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

/// Cylinder `{r < R, 0 < z < B}` with inner radius `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    #[serde(rename = "R")]
    pub r: f64,
    pub eps: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl CylinderSpec {
    pub fn new(r: f64, eps: f64, b: f64) -> Result<Self, GeometryError> {
        let ok = r.is_finite() && eps.is_finite() && b.is_finite() && eps > 0.0 && eps < r && b > 0.0;
        if ok {
            Ok(CylinderSpec { r, eps, b })
        } else {
            Err(GeometryError::InvalidCylinder { r, eps, b })
        }
    }

    /// Lower bound `eps / sqrt(eps^2 + B^2)` on the radial derivative of travel time.
    pub fn monotonicity_constant(&self) -> f64 {
        self.eps / (self.eps * self.eps + self.b * self.b).sqrt()
    }
}

impl Default for CylinderSpec {
    fn default() -> Self {
        CylinderSpec { r: 1.0, eps: 0.01, b: 1.0 }
    }
}

/// Semi-discrete grid: r-nodes on `[eps, R]`, periodic φ columns, z-planes on `[0, B]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylGrid {
    pub spec: CylinderSpec,
    /// Number of r-nodes in `(eps, R]`; the node `r = eps` is added on top.
    pub n_r: usize,
    /// Number of φ-intervals on `[0, 2π)`; index `n_phi` aliases index 0.
    pub n_phi: usize,
    /// Number of z-intervals on `[0, B]`.
    pub n_z: usize,
    pub h_r: f64,
    pub h_phi: f64,
    pub h_z: f64,
    /// Lower bound `min(h_phi, h_z)` on the tangential spacings.
    pub h0: f64,
    r_nodes: Vec<f64>,
}

impl CylGrid {
    pub fn new(spec: CylinderSpec, n_r: usize, n_phi: usize, n_z: usize) -> Result<Self, GeometryError> {
        if n_r < 1 || n_phi < 3 || n_z < 2 {
            return Err(GeometryError::InvalidGrid(format!(
                "need n_r >= 1, n_phi >= 3, n_z >= 2; got {n_r}, {n_phi}, {n_z}"
            )));
        }
        let h_r = spec.r / n_r as f64;
        let mut r_nodes = Vec::with_capacity(n_r + 1);
        r_nodes.push(spec.eps);
        if spec.eps < h_r {
            // First interval is h_r - eps, the remaining ones are uniform.
            r_nodes.extend((1..=n_r).map(|m| spec.r * m as f64 / n_r as f64));
        } else {
            let h = (spec.r - spec.eps) / n_r as f64;
            r_nodes.extend((1..=n_r).map(|m| spec.eps + h * m as f64));
        }
        let h_phi = 2.0 * PI / n_phi as f64;
        let h_z = spec.b / n_z as f64;
        Ok(CylGrid { spec, n_r, n_phi, n_z, h_r, h_phi, h_z, h0: h_phi.min(h_z), r_nodes })
    }

    /// Grid with all three spacings close to `h`.
    pub fn with_spacing(spec: CylinderSpec, h: f64, n_phi: usize) -> Result<Self, GeometryError> {
        let n_r = (spec.r / h).round().max(1.0) as usize;
        let n_z = (spec.b / h).round().max(2.0) as usize;
        CylGrid::new(spec, n_r, n_phi, n_z)
    }

    /// r-nodes `eps = r_0 < r_1 < ... < r_{n_r} = R`.
    pub fn r_nodes(&self) -> &[f64] {
        &self.r_nodes
    }

    pub fn phi(&self, i: usize) -> f64 {
        (i % self.n_phi) as f64 * self.h_phi
    }

    pub fn z(&self, j: usize) -> f64 {
        if j == self.n_z {
            self.spec.b
        } else {
            j as f64 * self.h_z
        }
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..=self.n_z).map(|j| self.z(j)).collect()
    }

    /// Number of stored r-nodes, `n_r + 1`.
    pub fn nr(&self) -> usize {
        self.r_nodes.len()
    }

    /// Number of stored z-planes, `n_z + 1`.
    pub fn nz(&self) -> usize {
        self.n_z + 1
    }

    /// Number of stored samples `(r, φ, z)`.
    pub fn len(&self) -> usize {
        self.nr() * self.n_phi * self.nz()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(m, i, j)` in r-major, z-fastest order.
    pub fn index(&self, m: usize, i: usize, j: usize) -> usize {
        (m * self.n_phi + i % self.n_phi) * self.nz() + j
    }

    /// Trapezoid weights on the r-nodes.
    pub fn r_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.r_nodes)
    }
}

/// Regular Cartesian grid over `[-extent, extent]^2 x [0, (nz - 1) spacing]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartGrid {
    /// Half-width of the x and y axes.
    pub extent: f64,
    /// Nodes along x and y.
    pub m: usize,
    /// Nodes along z.
    pub m_z: usize,
    pub spacing: f64,
}

impl CartGrid {
    /// Grid with `m` nodes along x and y and matching spacing along z up to `height`.
    pub fn new(extent: f64, m: usize, height: f64) -> Result<Self, GeometryError> {
        if m < 3 || !(extent > 0.0) || !(height > 0.0) {
            return Err(GeometryError::InvalidGrid(format!("Cartesian grid with m = {m}, extent = {extent}")));
        }
        let spacing = 2.0 * extent / (m - 1) as f64;
        let steps = height / spacing;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(GeometryError::InvalidGrid(format!("height {height} is not a multiple of spacing {spacing}")));
        }
        let m_z = steps.round() as usize + 1;
        if m_z < 3 {
            return Err(GeometryError::InvalidGrid("fewer than 3 z-nodes".into()));
        }
        Ok(CartGrid { extent, m, m_z, spacing })
    }

    /// Grid of the given spacing covering the closed cylinder.
    pub fn for_cylinder(spec: &CylinderSpec, spacing: f64) -> Result<Self, GeometryError> {
        let m = (2.0 * spec.r / spacing).round() as usize + 1;
        CartGrid::new(spec.r, m, spec.b)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.m, self.m, self.m_z]
    }

    pub fn len(&self) -> usize {
        self.m * self.m * self.m_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat C-order index with z fastest.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.m + iy) * self.m_z + iz
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> (f64, f64, f64) {
        (-self.extent + ix as f64 * self.spacing, -self.extent + iy as f64 * self.spacing, iz as f64 * self.spacing)
    }

    /// Trilinear interpolation of a node field at `(x, y, z)`.
    pub fn interpolate(&self, values: &[f64], x: f64, y: f64, z: f64) -> Result<f64, GeometryError> {
        if values.len() != self.len() {
            return Err(GeometryError::SizeMismatch { got: values.len(), expected: self.len() });
        }
        let tol = 1e-9 * self.spacing;
        let locate = |t: f64, n: usize| -> Option<(usize, f64)> {
            let s = t / self.spacing;
            let max = (n - 1) as f64;
            if s < -tol || s > max + tol {
                return None;
            }
            let s = s.clamp(0.0, max);
            let k = (s.floor() as usize).min(n - 2);
            Some((k, s - k as f64))
        };
        let out = || GeometryError::OutOfDomain { x, y, z };
        let (ix, fx) = locate(x + self.extent, self.m).ok_or_else(out)?;
        let (iy, fy) = locate(y + self.extent, self.m).ok_or_else(out)?;
        let (iz, fz) = locate(z, self.m_z).ok_or_else(out)?;
        let mut acc = 0.0;
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * values[self.index(ix + dx, iy + dy, iz + dz)];
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// `(r, φ, z) -> (r cos φ, r sin φ, z)`.
pub fn cyl_to_cart(r: f64, phi: f64, z: f64) -> (f64, f64, f64) {
    (r * phi.cos(), r * phi.sin(), z)
}

/// Inverse of [`cyl_to_cart`] with `φ ∈ [0, 2π)`.
pub fn cart_to_cyl(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
    let mut phi = y.atan2(x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi = 0.0;
    }
    (x.hypot(y), phi, z)
}

/// Samples a Cartesian node field at every node of a cylindrical grid.
pub fn sample_cart_to_cyl(values: &[f64], cart: &CartGrid, grid: &CylGrid) -> Result<Vec<f64>, GeometryError> {
    let mut out = vec![0.0; grid.len()];
    for (m, &r) in grid.r_nodes().iter().enumerate() {
        for i in 0..grid.n_phi {
            let phi = grid.phi(i);
            for j in 0..grid.nz() {
                let (x, y, z) = cyl_to_cart(r, phi, grid.z(j));
                out[grid.index(m, i, j)] = cart.interpolate(values, x, y, z)?;
            }
        }
    }
    Ok(out)
}

/// Semi-discrete `L2` and `H1` norms of an `N`-vector field.
///
/// `values[s]` holds component `s` in [`CylGrid::index`] order. The sums run
/// over `i = 0..=n_phi` (the aliased column counted twice) and `j = 0..=n_z`;
/// z-difference quotients exist on interior planes only.
pub fn semidiscrete_norms(grid: &CylGrid, values: &[Vec<f64>]) -> Result<(f64, f64), GeometryError> {
    if grid.nz() < 3 {
        return Err(GeometryError::TooCoarse("fewer than 3 z-planes".into()));
    }
    for comp in values {
        if comp.len() != grid.len() {
            return Err(GeometryError::SizeMismatch { got: comp.len(), expected: grid.len() });
        }
    }
    let w = grid.r_weights();
    let mut l2 = 0.0;
    let mut d2 = 0.0;
    for comp in values {
        for i in 0..=grid.n_phi {
            for j in 0..grid.nz() {
                for (m, wm) in w.iter().enumerate() {
                    let v = comp[grid.index(m, i, j)];
                    l2 += wm * v * v;
                    let dphi = (comp[grid.index(m, i + 1, j)] - comp[grid.index(m, i + grid.n_phi - 1, j)])
                        / (2.0 * grid.h_phi);
                    d2 += wm * dphi * dphi;
                    if j > 0 && j < grid.n_z {
                        let dz = (comp[grid.index(m, i, j + 1)] - comp[grid.index(m, i, j - 1)]) / (2.0 * grid.h_z);
                        d2 += wm * dz * dz;
                    }
                }
            }
        }
    }
    Ok((l2.sqrt(), (l2 + d2).sqrt()))
}

/// Plain-text `key = value` description of a cylinder and its grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub spec: CylinderSpec,
    pub n_r: usize,
    pub n_phi: usize,
    pub n_z: usize,
    pub cart_m: usize,
    pub cart_extent: f64,
}

impl GridConfig {
    pub fn cyl_grid(&self) -> Result<CylGrid, GeometryError> {
        CylGrid::new(self.spec, self.n_r, self.n_phi, self.n_z)
    }

    pub fn cart_grid(&self) -> Result<CartGrid, GeometryError> {
        CartGrid::new(self.cart_extent, self.cart_m, self.spec.b)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GeometryError::Config { line: k + 1, msg: "expected key = value".into() })?;
            map.insert(key.trim().to_string(), (k + 1, value.trim().to_string()));
        }
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T, GeometryError> {
            let (line, v) =
                map.get(key).ok_or_else(|| GeometryError::Config { line: 0, msg: format!("missing key {key}") })?;
            v.parse().map_err(|_| GeometryError::Config { line: *line, msg: format!("bad value for {key}: {v}") })
        }
        let spec = CylinderSpec::new(get(&map, "R")?, get(&map, "eps")?, get(&map, "B")?)?;
        let cfg = GridConfig {
            spec,
            n_r: get(&map, "n_r")?,
            n_phi: get(&map, "n_phi")?,
            n_z: get(&map, "n_z")?,
            cart_m: get(&map, "cart_m")?,
            cart_extent: get(&map, "cart_extent")?,
        };
        cfg.cyl_grid()?;
        cfg.cart_grid()?;
        Ok(cfg)
    }
}

impl fmt::Display for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "R = {}", self.spec.r)?;
        writeln!(f, "eps = {}", self.spec.eps)?;
        writeln!(f, "B = {}", self.spec.b)?;
        writeln!(f, "n_r = {}", self.n_r)?;
        writeln!(f, "n_phi = {}", self.n_phi)?;
        writeln!(f, "n_z = {}", self.n_z)?;
        writeln!(f, "cart_m = {}", self.cart_m)?;
        writeln!(f, "cart_extent = {}", self.cart_extent)
    }
}
