//! Independent numerical oracles shared by integration tests.
#![allow(dead_code)]

use cyltomo::geometry::CylGrid;
use cyltomo::observations::BoundaryData;

/// Gauss-Legendre nodes and weights on `[a, b]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (b - a) * t + 0.5 * (b + a);
        w[i] = (b - a) / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Integral of `f` on `[a, b]` by 64-point Gauss-Legendre on `pieces` panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|p| {
            let (x, w) = gauss_legendre(64, a + p as f64 * h, a + (p + 1) as f64 * h);
            x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum::<f64>()
        })
        .sum()
}

/// Closed-form traces of the homogeneous medium.
pub fn analytic_homogeneous(grid: &CylGrid) -> BoundaryData {
    let z0s = grid.z_nodes();
    let (r_max, b) = (grid.spec.r, grid.spec.b);
    let mut data = BoundaryData {
        grid: grid.clone(),
        z0s: z0s.clone(),
        p: Vec::new(),
        p0: Vec::new(),
        pb: Vec::new(),
        delta: 0.0,
        seed: 0,
    };
    for &z0 in &z0s {
        for _ in 0..grid.n_phi {
            for j in 0..grid.nz() {
                data.p.push((r_max * r_max + (grid.z(j) - z0).powi(2)).sqrt());
            }
        }
    }
    for &z0 in &z0s {
        for &r in grid.r_nodes() {
            for _ in 0..grid.n_phi {
                data.p0.push((r * r + z0 * z0).sqrt());
                data.pb.push((r * r + (b - z0).powi(2)).sqrt());
            }
        }
    }
    data
}
