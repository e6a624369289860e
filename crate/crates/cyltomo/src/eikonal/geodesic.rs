//! Ray tracing of geodesics from an axial source in cylindrical coordinates.

use serde::{Deserialize, Serialize};

use super::EikonalError;
use crate::geometry::CylGrid;

/// Index samples on a cylindrical grid with C1 tensor-product cubic interpolation.
#[derive(Debug, Clone)]
pub struct CylField {
    pub grid: CylGrid,
    pub values: Vec<f64>,
}

/// Catmull-Rom weights and their derivatives for local coordinate `t ∈ [0, 1]`.
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ];
    let d = [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ];
    (w, d)
}

impl CylField {
    /// Cell and local coordinate on a uniform axis, clamped to the end cells.
    fn locate(x: f64, x0: f64, h: f64, cells: usize) -> (isize, f64) {
        let s = ((x - x0) / h).clamp(0.0, cells as f64);
        let k = (s.floor() as isize).min(cells as isize - 1);
        (k, s - k as f64)
    }

    /// `(n, n_r, n_phi, n_z)` at a point with `eps <= r <= R`.
    pub fn eval(&self, r: f64, phi: f64, z: f64) -> (f64, f64, f64, f64) {
        let g = &self.grid;
        // Nodes past the first are uniform; lattice index k sits at node k.
        // A shortened first interval leaves lattice 0 unstored, so it clamps to node 1.
        let rn = g.r_nodes();
        let hr = rn[2] - rn[1];
        let r_origin = rn[1] - hr;
        let lowest = if ((rn[1] - rn[0]) - hr).abs() < 1e-12 { 0 } else { 1 };
        let (kr, tr) = Self::locate(r.max(rn[0]), r_origin, hr, g.n_r);
        let (kp, tp) = Self::locate(phi.rem_euclid(2.0 * std::f64::consts::PI), 0.0, g.h_phi, g.n_phi);
        let (kz, tz) = Self::locate(z, 0.0, g.h_z, g.n_z);
        let (wr, dr) = cubic_weights(tr);
        let (wp, dp) = cubic_weights(tp);
        let (wz, dz) = cubic_weights(tz);
        let nr = g.nr() as isize;
        let nzp = g.nz() as isize;
        let np = g.n_phi as isize;
        let (mut v, mut vr, mut vp, mut vz) = (0.0, 0.0, 0.0, 0.0);
        for a in 0..4 {
            let m = (kr + a as isize - 1).clamp(lowest, nr - 1) as usize;
            for b in 0..4 {
                let i = (kp + b as isize - 1).rem_euclid(np) as usize;
                for c in 0..4 {
                    let j = (kz + c as isize - 1).clamp(0, nzp - 1) as usize;
                    let f = self.values[g.index(m, i, j)];
                    v += wr[a] * wp[b] * wz[c] * f;
                    vr += dr[a] * wp[b] * wz[c] * f;
                    vp += wr[a] * dp[b] * wz[c] * f;
                    vz += wr[a] * wp[b] * dz[c] * f;
                }
            }
        }
        (v, vr / hr, vp / g.h_phi, vz / g.h_z)
    }
}

/// One sample along a geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub r: f64,
    pub phi: f64,
    pub z: f64,
    /// Momenta `(tau_r, tau_phi, tau_z)`.
    pub q: [f64; 3],
    /// Riemannian length, equal to travel time.
    pub s: f64,
}

type Y = [f64; 6];

fn rhs(field: &CylField, y: &Y) -> Y {
    let [r, phi, z, q1, q2, q3] = *y;
    let (n, nr, np, nz) = field.eval(r, phi, z);
    let n2 = n * n;
    [q1 / n2, q2 / (r * r * n2), q3 / n2, nr / n + q2 * q2 / (r * r * r * n2), np / n, nz / n]
}

fn rk4(field: &CylField, y: &Y, h: f64) -> Y {
    let add = |a: &Y, b: &Y, s: f64| -> Y { std::array::from_fn(|k| a[k] + s * b[k]) };
    let k1 = rhs(field, y);
    let k2 = rhs(field, &add(y, &k1, h / 2.0));
    let k3 = rhs(field, &add(y, &k2, h / 2.0));
    let k4 = rhs(field, &add(y, &k3, h));
    std::array::from_fn(|k| y[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
}

/// Traces the geodesic leaving `(0, 0, z0)` with polar angle `theta0` and azimuth `phi0`.
///
/// The segment inside `r < eps` is the straight line of the unit-index core;
/// beyond it the system is integrated by RK4 with step doubling to local
/// tolerance `tol`. The path ends when it leaves the closed cylinder, with
/// the last state placed on the boundary, or when `s` reaches `max_arc`.
pub fn trace_geodesic(
    field: &CylField,
    z0: f64,
    theta0: f64,
    phi0: f64,
    max_arc: f64,
    tol: f64,
) -> Result<Vec<GeodesicState>, EikonalError> {
    let spec = field.grid.spec;
    let (st, ct) = (theta0.sin(), theta0.cos());
    let state = |y: &Y, s: f64| GeodesicState { r: y[0], phi: y[1], z: y[2], q: [y[3], y[4], y[5]], s };
    let mut path = vec![GeodesicState { r: 0.0, phi: phi0, z: z0, q: [st, 0.0, ct], s: 0.0 }];
    if st <= 1e-12 {
        // Straight along the axis.
        let s_exit = if ct > 0.0 { spec.b - z0 } else { z0 };
        let s = s_exit.min(max_arc);
        path.push(GeodesicState { r: 0.0, phi: phi0, z: z0 + ct * s, q: [st, 0.0, ct], s });
        return Ok(path);
    }
    let s_core = spec.eps / st;
    let inside = |y: &Y| y[0] <= spec.r && y[2] >= 0.0 && y[2] <= spec.b;
    let mut y: Y = [spec.eps, phi0, z0 + ct * s_core, st, 0.0, ct];
    if !inside(&y) || s_core >= max_arc {
        let s = s_core.min(max_arc).min(if ct > 0.0 {
            (spec.b - z0) / ct
        } else if ct < 0.0 {
            -z0 / ct
        } else {
            f64::INFINITY
        });
        path.push(GeodesicState { r: st * s, phi: phi0, z: z0 + ct * s, q: [st, 0.0, ct], s });
        return Ok(path);
    }
    let mut s = s_core;
    path.push(state(&y, s));
    let mut h = 0.01 * spec.r;
    while s < max_arc {
        h = h.min(max_arc - s);
        let full = rk4(field, &y, h);
        let half = rk4(field, &rk4(field, &y, h / 2.0), h / 2.0);
        let err = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > tol {
            h /= 2.0;
            if h < 1e-12 {
                return Err(EikonalError::Stiff { s });
            }
            continue;
        }
        let next = half;
        if next[0] < 0.5 * spec.eps {
            return Err(EikonalError::AxisSingularity { s });
        }
        if !inside(&next) {
            // Secant estimate of the exit fraction, then an exact RK4 step to it.
            let mut f = exit_fraction(&y, &next, spec.r, spec.b);
            let mut yb = rk4(field, &y, f * h);
            for _ in 0..3 {
                let g = exit_fraction(&y, &yb, spec.r, spec.b);
                if g >= 1.0 {
                    break;
                }
                f *= g;
                yb = rk4(field, &y, f * h);
            }
            path.push(state(&yb, s + f * h));
            return Ok(path);
        }
        y = next;
        s += h;
        path.push(state(&y, s));
        if err < tol / 32.0 {
            h *= 2.0;
        }
    }
    Ok(path)
}

fn exit_fraction(a: &Y, b: &Y, r_max: f64, b_max: f64) -> f64 {
    let mut f: f64 = 1.0;
    if b[0] > r_max {
        f = f.min((r_max - a[0]) / (b[0] - a[0]));
    }
    if b[2] > b_max {
        f = f.min((b_max - a[2]) / (b[2] - a[2]));
    }
    if b[2] < 0.0 {
        f = f.min(a[2] / (a[2] - b[2]));
    }
    f.clamp(0.0, 1.0)
}
