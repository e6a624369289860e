//! Empirical checks of the weighted Volterra estimate and of convexity.

use serde::{Deserialize, Serialize};

use super::field::SemiDiscreteField;
use super::functional::Functional;

/// Both sides of `int (int_r^R f)^2 e^{2 lambda r} dr <= lambda^{-2} int f^2 e^{2 lambda r} dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates both sides for `f` sampled at uniform nodes on `[eps, R]`.
///
/// `f` is extended piecewise linearly and both sides are integrated by the
/// trapezoid rule on a grid refined until they change by less than 1e-7
/// relative. The inner integral is exact for the piecewise-linear extension.
pub fn carleman_check(f: &[f64], lambda: f64, eps: f64, r: f64) -> CarlemanCheck {
    if f.iter().all(|v| *v == 0.0) {
        return CarlemanCheck { lhs: 0.0, rhs: 0.0, holds: true };
    }
    let mut refine = 16usize;
    let mut prev = sides(f, lambda, eps, r, refine);
    loop {
        refine *= 2;
        let next = sides(f, lambda, eps, r, refine);
        let settled = (next.0 - prev.0).abs() <= 1e-7 * next.0.abs() && (next.1 - prev.1).abs() <= 1e-7 * next.1.abs();
        prev = next;
        if settled || refine >= 1 << 16 {
            break;
        }
    }
    let (lhs, rhs) = prev;
    CarlemanCheck { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-6) }
}

fn sides(f: &[f64], lambda: f64, eps: f64, r: f64, refine: usize) -> (f64, f64) {
    let pieces = (f.len().max(2) - 1) * refine;
    let h = (r - eps) / pieces as f64;
    let value = |t: f64| -> f64 {
        if f.len() == 1 {
            return f[0];
        }
        let s = (t - eps) / (r - eps) * (f.len() - 1) as f64;
        let k = (s.floor() as usize).min(f.len() - 2);
        let w = s - k as f64;
        f[k] * (1.0 - w) + f[k + 1] * w
    };
    let fs: Vec<f64> = (0..=pieces).map(|k| value(eps + k as f64 * h)).collect();
    let mut inner = vec![0.0; pieces + 1];
    for k in (0..pieces).rev() {
        inner[k] = inner[k + 1] + 0.5 * h * (fs[k] + fs[k + 1]);
    }
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..=pieces {
        let w = if k == 0 || k == pieces { 0.5 * h } else { h };
        let e = (2.0 * lambda * (eps + k as f64 * h - r)).exp();
        lhs += w * inner[k] * inner[k] * e;
        rhs += w * fs[k] * fs[k] * e;
    }
    // Common factor e^{2 lambda R} cancels in every comparison; restore it for reporting.
    let scale = (2.0 * lambda * r).exp();
    (lhs * scale, rhs * scale / (lambda * lambda))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `J(V2) - J(V1) - <grad J(V1), V2 - V1>`.
pub fn convexity_probe(functional: &Functional, v1: &SemiDiscreteField, v2: &SemiDiscreteField) -> f64 {
    let (e1, g1) = functional.value_and_gradient(v1);
    let e2 = functional.value(v2);
    let mut diff = v2.clone();
    for (d, a) in diff.values.iter_mut().zip(&v1.values) {
        *d -= a;
    }
    e2.j - e1.j - g1.dot(&diff)
}
