//! First-order fast marching for `|grad tau| = n` on a Cartesian grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::EikonalError;
use crate::geometry::CartGrid;
use crate::phantom::RefractiveField;

/// Travel times from one axial source over a Cartesian grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeTable {
    pub source_z0: f64,
    pub grid: CartGrid,
    pub tau: Vec<f64>,
    /// Whether accepted values were non-decreasing in acceptance order.
    pub causal: bool,
}

#[derive(Clone, Copy)]
struct Entry {
    t: f64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Entry {
    // Reversed so that `BinaryHeap` pops the smallest time; ties by index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then_with(|| o.idx.cmp(&self.idx))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Trial,
    Accepted,
}

/// Godunov upwind update from the smallest accepted neighbour per axis.
fn godunov(mut a: [f64; 3], rhs: f64) -> f64 {
    a.sort_by(f64::total_cmp);
    let mut t = a[0] + rhs;
    if t <= a[1] {
        return t;
    }
    // Two active axes.
    let s = a[0] + a[1];
    let d = s * s - 2.0 * (a[0] * a[0] + a[1] * a[1] - rhs * rhs);
    t = 0.5 * (s + d.max(0.0).sqrt());
    if t <= a[2] {
        return t;
    }
    let s = a[0] + a[1] + a[2];
    let q = a[0] * a[0] + a[1] * a[1] + a[2] * a[2] - rhs * rhs;
    let d = s * s - 3.0 * q;
    (s + d.max(0.0).sqrt()) / 3.0
}

struct March {
    dims: [usize; 3],
    strides: [usize; 3],
    tau: Vec<f64>,
    state: Vec<State>,
    heap: BinaryHeap<Entry>,
}

impl March {
    fn coords(&self, idx: usize) -> [usize; 3] {
        [idx / self.strides[0], (idx / self.strides[1]) % self.dims[1], idx % self.dims[2]]
    }

    /// Recomputes every non-accepted neighbour of a freshly accepted node.
    fn relax(&mut self, idx: usize, n: &[f64], h: f64) {
        let p = self.coords(idx);
        for axis in 0..3 {
            for step in [-1isize, 1] {
                let q = p[axis] as isize + step;
                if q < 0 || q >= self.dims[axis] as isize {
                    continue;
                }
                let nb = (idx as isize + step * self.strides[axis] as isize) as usize;
                if self.state[nb] == State::Accepted {
                    continue;
                }
                let nq = self.coords(nb);
                let mut a = [f64::INFINITY; 3];
                for (k, ak) in a.iter_mut().enumerate() {
                    for s in [-1isize, 1] {
                        let r = nq[k] as isize + s;
                        if r < 0 || r >= self.dims[k] as isize {
                            continue;
                        }
                        let m = (nb as isize + s * self.strides[k] as isize) as usize;
                        if self.state[m] == State::Accepted {
                            *ak = ak.min(self.tau[m]);
                        }
                    }
                }
                let cand = godunov(a, n[nb] * h);
                if cand < self.tau[nb] {
                    self.tau[nb] = cand;
                    self.state[nb] = State::Trial;
                    self.heap.push(Entry { t: cand, idx: nb });
                }
            }
        }
    }
}

/// Fast marching settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmmOptions {
    /// Half-width of the cube of nodes around the source that is seeded with
    /// exact travel times; at least one cell (the 26-neighbourhood).
    pub seed_radius: f64,
}

impl Default for FmmOptions {
    fn default() -> Self {
        FmmOptions { seed_radius: 0.05 }
    }
}

/// Travel times from the point source `(0, 0, z0)` with default options.
pub fn solve_eikonal(field: &RefractiveField, z0: f64) -> Result<TravelTimeTable, EikonalError> {
    solve_eikonal_at(field, [0.0, 0.0, z0], &FmmOptions::default())
}

/// Travel times from an arbitrary source point inside the grid.
///
/// Nodes in the cube of half-width `seed_radius` around the node nearest the
/// source get `n(source) |x - x0|` and are frozen; the rest is marched
/// outward. A seed of fixed physical size keeps the error first order; a
/// seed of fixed cell count adds a `log(1/h)` factor.
pub fn solve_eikonal_at(
    field: &RefractiveField,
    source: [f64; 3],
    opts: &FmmOptions,
) -> Result<TravelTimeTable, EikonalError> {
    let g = &field.grid;
    let n_src = g
        .interpolate(&field.values, source[0], source[1], source[2])
        .map_err(|_| EikonalError::SourceOutside { x: source[0], y: source[1], z: source[2] })?;
    let dims = g.dims();
    let h = g.spacing;
    let nearest = |t: f64, off: f64, n: usize| (((t + off) / h).round() as isize).clamp(0, n as isize - 1) as usize;
    let c = [
        nearest(source[0], g.extent, dims[0]),
        nearest(source[1], g.extent, dims[1]),
        nearest(source[2], 0.0, dims[2]),
    ];
    let mut m = March {
        dims,
        strides: [dims[1] * dims[2], dims[2], 1],
        tau: vec![f64::INFINITY; g.len()],
        state: vec![State::Far; g.len()],
        heap: BinaryHeap::new(),
    };
    let mut seeds = Vec::new();
    let k = ((opts.seed_radius / h).round() as isize).max(1);
    for dx in -k..=k {
        for dy in -k..=k {
            for dz in -k..=k {
                let p = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                if (0..3).any(|k| p[k] < 0 || p[k] >= dims[k] as isize) {
                    continue;
                }
                let (ix, iy, iz) = (p[0] as usize, p[1] as usize, p[2] as usize);
                let (x, y, z) = g.point(ix, iy, iz);
                let d = ((x - source[0]).powi(2) + (y - source[1]).powi(2) + (z - source[2]).powi(2)).sqrt();
                let idx = g.index(ix, iy, iz);
                m.tau[idx] = n_src * d;
                m.state[idx] = State::Accepted;
                seeds.push(idx);
            }
        }
    }
    for &idx in &seeds {
        m.relax(idx, &field.values, h);
    }
    let mut last = 0.0f64;
    let mut causal = true;
    while let Some(Entry { t, idx }) = m.heap.pop() {
        if m.state[idx] == State::Accepted || t > m.tau[idx] {
            continue;
        }
        m.state[idx] = State::Accepted;
        if t < last - 1e-12 {
            causal = false;
        }
        last = last.max(t);
        m.relax(idx, &field.values, h);
    }
    let tau = m.tau;
    Ok(TravelTimeTable { source_z0: source[2], grid: g.clone(), tau, causal })
}

impl TravelTimeTable {
    /// Trilinear travel time at a point.
    pub fn at(&self, x: f64, y: f64, z: f64) -> Result<f64, EikonalError> {
        self.grid.interpolate(&self.tau, x, y, z).map_err(|_| EikonalError::SourceOutside { x, y, z })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn godunov_one_two_three_axes() {
        assert!((godunov([0.0, f64::INFINITY, f64::INFINITY], 1.0) - 1.0).abs() < 1e-15);
        let t = godunov([0.0, 0.0, f64::INFINITY], 1.0);
        assert!((t - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let t = godunov([0.0, 0.0, 0.0], 1.0);
        assert!((t - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn heap_pops_smallest() {
        let mut h = BinaryHeap::new();
        for (t, idx) in [(3.0, 0), (1.0, 1), (2.0, 2)] {
            h.push(Entry { t, idx });
        }
        assert_eq!(h.pop().unwrap().idx, 1);
    }
}
