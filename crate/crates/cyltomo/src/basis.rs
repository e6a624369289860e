//! Orthonormal exponential-polynomial basis on `[0, B]`.
//!
//! `Psi_n(z) = P_n(z) e^z` where `P_n` has degree `n`, obtained by modified
//! Gram-Schmidt on `z^n e^z`. Inner products `int_0^B z^k e^{2z} dz` are
//! summed from their power series and all orthogonalisation work is done in
//! double-double arithmetic, so the stored f64 coefficients are correctly
//! rounded even when the monomial family is nearly collinear.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dd::Dd;
use crate::quadrature::Quadrature;

/// Largest tolerated estimate of the Gram matrix condition number.
pub const MAX_GRAM_CONDITION: f64 = 1e14;

/// Minimum number of z0 samples accepted by [`BasisSet::project`].
pub const MIN_PROJECTION_NODES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("invalid basis parameters: N = {n}, B = {b}")]
    InvalidParameters { n: usize, b: f64 },
    #[error("Gram matrix condition {condition:e} exceeds {MAX_GRAM_CONDITION:e} at N = {n}; largest stable N is {max_stable}")]
    IllConditioned { n: usize, condition: f64, max_stable: usize },
    #[error("basis index {index} out of range for N = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("projection needs at least {MIN_PROJECTION_NODES} z0 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("sample count {samples} does not match quadrature size {nodes}")]
    LengthMismatch { samples: usize, nodes: usize },
}

/// Basis functions `Psi_0..Psi_{N-1}` and the matrix `a_mn = int Psi_m Psi_n'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    b: f64,
    /// `poly_coeffs[n][k]` multiplies `z^k` in `P_n`.
    poly_coeffs: Vec<Vec<f64>>,
    /// Row-major `N x N` matrix.
    a: Vec<f64>,
    /// Estimated condition number of the monomial Gram matrix.
    gram_condition: f64,
}

/// `int_0^B z^k e^{2z} dz` for `k = 0..count` as a positive power series.
fn exp_moments(b: f64, count: usize) -> Vec<Dd> {
    let bd = Dd::from_f64(b);
    let two_b = Dd::from_f64(2.0 * b);
    let mut out = Vec::with_capacity(count);
    let mut b_pow = bd;
    for k in 0..count {
        // sum_j (2B)^j / j! * B^{k+1} / (k + j + 1)
        let mut q = Dd::ONE;
        let mut sum = Dd::ZERO;
        let mut j = 0usize;
        loop {
            let term = q / Dd::from_f64((k + j + 1) as f64);
            sum = sum + term;
            j += 1;
            q = q * two_b / Dd::from_f64(j as f64);
            if j as f64 > 2.0 * b && q.hi <= 1e-34 * sum.hi {
                break;
            }
        }
        out.push(sum * b_pow);
        b_pow = b_pow * bd;
    }
    out
}

fn frobenius(m: &[Vec<Dd>]) -> f64 {
    m.iter().flatten().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt()
}

/// Coefficient-space inner product `x^T G y` with `G_ab = moments[a + b]`.
fn gram_dot(x: &[Dd], y: &[Dd], moments: &[Dd]) -> Dd {
    let mut s = Dd::ZERO;
    for (a, xa) in x.iter().enumerate() {
        if xa.hi == 0.0 {
            continue;
        }
        let mut row = Dd::ZERO;
        for (b, yb) in y.iter().enumerate() {
            row = row + moments[a + b] * *yb;
        }
        s = s + *xa * row;
    }
    s
}

impl BasisSet {
    /// Builds the first `n` basis functions on `[0, b]`.
    pub fn build(n: usize, b: f64) -> Result<Self, BasisError> {
        if n == 0 || !(b > 0.0) || !b.is_finite() {
            return Err(BasisError::InvalidParameters { n, b });
        }
        let moments = exp_moments(b, 2 * n);
        let mut q: Vec<Vec<Dd>> = Vec::with_capacity(n);
        let mut condition = 0.0;
        for k in 0..n {
            let mut v = vec![Dd::ZERO; n];
            v[k] = Dd::ONE;
            for qm in &q {
                let c = gram_dot(qm, &v, &moments);
                for (vi, qi) in v.iter_mut().zip(qm) {
                    *vi = *vi - c * *qi;
                }
            }
            let norm = gram_dot(&v, &v, &moments).sqrt();
            for vi in v.iter_mut() {
                *vi = *vi / norm;
            }
            q.push(v);

            let size = k + 1;
            let gram: Vec<Vec<Dd>> = (0..size).map(|i| (0..size).map(|j| moments[i + j]).collect()).collect();
            let coeffs: Vec<Vec<Dd>> = q.iter().map(|r| r[..size].to_vec()).collect();
            let c = frobenius(&gram) * frobenius(&coeffs).powi(2);
            if c > MAX_GRAM_CONDITION {
                return Err(BasisError::IllConditioned { n, condition: c, max_stable: k });
            }
            condition = c;
        }

        // a_mn = c_m^T G (D + I) c_n where D differentiates coefficient vectors.
        let deriv: Vec<Vec<Dd>> = q
            .iter()
            .map(|c| {
                let mut d = c.clone();
                for k in 1..n {
                    d[k - 1] = d[k - 1] + c[k] * Dd::from_f64(k as f64);
                }
                d
            })
            .collect();
        let mut a = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                a[m * n + k] = gram_dot(&q[m], &deriv[k], &moments).to_f64();
            }
        }
        let poly_coeffs = q.iter().enumerate().map(|(k, c)| c[..=k].iter().map(|v| v.to_f64()).collect()).collect();
        Ok(BasisSet { b, poly_coeffs, a, gram_condition: condition })
    }

    pub fn len(&self) -> usize {
        self.poly_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poly_coeffs.is_empty()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    /// Coefficients of `P_n` in increasing powers of `z`.
    pub fn poly_coeffs(&self, n: usize) -> &[f64] {
        &self.poly_coeffs[n]
    }

    /// Entry `a_mn = int_0^B Psi_m Psi_n' dz`.
    pub fn a(&self, m: usize, n: usize) -> f64 {
        self.a[m * self.len() + n]
    }

    /// Row-major `A_N`.
    pub fn a_matrix(&self) -> &[f64] {
        &self.a
    }

    /// Determinant of `A_N` by partial-pivot elimination.
    pub fn det_a(&self) -> f64 {
        let n = self.len();
        let mut m = self.a.clone();
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).unwrap_or(col);
            if m[piv * n + col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                for k in 0..n {
                    m.swap(piv * n + k, col * n + k);
                }
                det = -det;
            }
            let p = m[col * n + col];
            det *= p;
            for i in col + 1..n {
                let f = m[i * n + col] / p;
                for k in col..n {
                    m[i * n + k] -= f * m[col * n + k];
                }
            }
        }
        det
    }

    fn check(&self, n: usize) -> Result<(), BasisError> {
        if n < self.len() {
            Ok(())
        } else {
            Err(BasisError::IndexOutOfRange { index: n, n: self.len() })
        }
    }

    /// `Psi_n(z0)`.
    pub fn evaluate(&self, n: usize, z0: f64) -> Result<f64, BasisError> {
        self.check(n)?;
        Ok(horner(&self.poly_coeffs[n], z0) * z0.exp())
    }

    /// `Psi_n'(z0) = (P_n'(z0) + P_n(z0)) e^{z0}`.
    pub fn evaluate_derivative(&self, n: usize, z0: f64) -> Result<f64, BasisError> {
        self.check(n)?;
        let c = &self.poly_coeffs[n];
        Ok((horner_derivative(c, z0) + horner(c, z0)) * z0.exp())
    }

    /// All `Psi_n(z0)` for `n < N`.
    pub fn values_at(&self, z0: f64) -> Vec<f64> {
        let e = z0.exp();
        self.poly_coeffs.iter().map(|c| horner(c, z0) * e).collect()
    }

    /// All `Psi_n'(z0)` for `n < N`.
    pub fn derivatives_at(&self, z0: f64) -> Vec<f64> {
        let e = z0.exp();
        self.poly_coeffs.iter().map(|c| (horner_derivative(c, z0) + horner(c, z0)) * e).collect()
    }

    /// Coefficients `f_s = int f Psi_s dz0` by the given quadrature.
    pub fn project(&self, quad: &Quadrature, f: &[f64]) -> Result<Vec<f64>, BasisError> {
        if quad.len() < MIN_PROJECTION_NODES {
            return Err(BasisError::TooFewNodes(quad.len()));
        }
        if f.len() != quad.len() {
            return Err(BasisError::LengthMismatch { samples: f.len(), nodes: quad.len() });
        }
        let mut out = vec![0.0; self.len()];
        for ((z, w), v) in quad.nodes.iter().zip(&quad.weights).zip(f) {
            for (o, p) in out.iter_mut().zip(self.values_at(*z)) {
                *o += w * v * p;
            }
        }
        Ok(out)
    }

    /// `sum_s coeffs[s] Psi_s(z0)`.
    pub fn reconstruct(&self, coeffs: &[f64], z0: f64) -> f64 {
        self.values_at(z0).iter().zip(coeffs).map(|(p, c)| p * c).sum()
    }

    /// JSON document with coefficients and `A_N`.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.len();
        serde_json::json!({
            "B": self.b,
            "N": n,
            "poly_coeffs": self.poly_coeffs,
            "A": (0..n).map(|m| self.a[m * n..(m + 1) * n].to_vec()).collect::<Vec<_>>(),
            "gram_condition": self.gram_condition,
        })
    }
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * z + v)
}

fn horner_derivative(c: &[f64], z: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, v)| acc * z + k as f64 * v)
}
