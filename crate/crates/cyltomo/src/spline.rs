//! Cubic interpolating splines and their nodal derivatives.

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `sub[i]` multiplies `x[i - 1]`, `sup[i]` multiplies `x[i + 1]`.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    c[0] = sup[0] / d;
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / d;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Second derivatives of the natural cubic spline through `(x, y)`.
pub fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let k = n - 2;
    let (mut sub, mut diag, mut sup, mut rhs) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        sub[i - 1] = h0;
        diag[i - 1] = 2.0 * (h0 + h1);
        sup[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    thomas(&sub, &diag, &sup, &mut rhs);
    m[1..n - 1].copy_from_slice(&rhs);
    m
}

/// First derivatives at the nodes of the natural cubic spline through `(x, y)`.
pub fn natural_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let m = natural_second_derivatives(x, y);
    let mut d = vec![0.0; n];
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        d[i] = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    }
    let h = x[n - 1] - x[n - 2];
    d[n - 1] = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
    d
}

/// First derivatives at the nodes of the periodic cubic spline through
/// uniformly spaced samples `y[i] = f(i h)` of a function with period `y.len() h`.
pub fn periodic_derivatives(h: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 3 {
        return vec![0.0; n];
    }
    // (M[i-1] + 4 M[i] + M[i+1]) h / 6 = (y[i+1] - 2 y[i] + y[i-1]) / h, cyclic.
    let rhs: Vec<f64> = (0..n).map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]) / (h * h)).collect();
    let m = cyclic_solve(1.0, 4.0, &rhs);
    (0..n).map(|i| (y[(i + 1) % n] - y[i]) / h - h * (2.0 * m[i] + m[(i + 1) % n]) / 6.0).collect()
}

/// Solves the cyclic tridiagonal system with constant `off`, `diag` by Sherman-Morrison.
fn cyclic_solve(off: f64, diag: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] -= gamma;
    d[n - 1] -= off * off / gamma;
    let sub = vec![off; n];
    let sup = vec![off; n];
    let mut x = rhs.to_vec();
    thomas(&sub, &d, &sup, &mut x);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off;
    thomas(&sub, &d, &sup, &mut u);
    let fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + u[0] + off * u[n - 1] / gamma);
    x.iter().zip(&u).map(|(a, b)| a - fact * b).collect()
}
