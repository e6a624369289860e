//! The weighted least-squares functional and its exact gradient.
//!
//! For every node the residual is `F = A_N V + S(V)` with
//! `S_s = Psi_s(B) Q(B) - Psi_s(0) Q(0) - int Psi_s'(z0) Q(z0) dz0`,
//! `Q = T_phi^2 / r^2 + T_z^2` and `T_w = -int_r^R d_w sqrt(u) dt + p_w`.
//! Here `u(z0) = sum_s V_s Psi_s(z0)` is floored at `u_floor` inside the
//! square root, `d_w` are the central difference quotients in φ (periodic)
//! and z (pinned end planes), the t-integral is the trapezoid rule on the
//! r-nodes and the z0-integral uses the source quadrature.
//! `J = sum over columns (i, j interior) and r-nodes of w_m e^{2 lambda r_m} |F|^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::SemiDiscreteField;
use super::InversionError;
use crate::basis::BasisSet;
use crate::geometry::CylGrid;
use crate::observations::{source_quadrature, DerivedData};

/// Value of `J` with clamp diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub j: f64,
    /// Fraction of (interior node, z0) samples with `u < u_floor`.
    pub clamped_fraction: f64,
    /// Set when more than half of the samples are clamped.
    pub degenerate: bool,
}

/// Assembled data, basis tables and weights for one `(lambda, u_floor)` pair.
#[derive(Debug, Clone)]
pub struct Functional {
    pub grid: CylGrid,
    pub basis: BasisSet,
    pub lambda: f64,
    pub u_floor: f64,
    n: usize,
    nl: usize,
    /// `psi[l * N + s] = Psi_s(z0_l)`.
    psi: Vec<f64>,
    /// `kappa[s * L + l]`: weight of `Q(z0_l)` in `S_s`.
    kappa: Vec<f64>,
    /// `w_m e^{2 lambda r_m}`.
    weight: Vec<f64>,
    /// Lateral derivatives indexed `((i * nz + j) * L + l)`.
    p_phi: Vec<f64>,
    p_z: Vec<f64>,
    g0: Vec<f64>,
    gb: Vec<f64>,
    a: Vec<f64>,
}

/// Brackets `T_phi`, `T_z` of one column, indexed `(m * L + l)`.
struct Brackets {
    t_phi: Vec<f64>,
    t_z: Vec<f64>,
}

impl Functional {
    pub fn new(derived: &DerivedData, basis: &BasisSet, lambda: f64, u_floor: f64) -> Result<Self, InversionError> {
        let grid = derived.grid.clone();
        let n = basis.len();
        if derived.n_basis != n {
            return Err(InversionError::Mismatch(format!(
                "data projected on {} functions, basis has {}",
                derived.n_basis, n
            )));
        }
        if grid.n_z < 2 {
            return Err(InversionError::Mismatch("need at least one interior z-plane".into()));
        }
        let nl = derived.z0s.len();
        let quad = source_quadrature(&derived.z0s);
        let mut psi = vec![0.0; nl * n];
        let mut kappa = vec![0.0; n * nl];
        for (l, &z0) in derived.z0s.iter().enumerate() {
            let v = basis.values_at(z0);
            let d = basis.derivatives_at(z0);
            for s in 0..n {
                psi[l * n + s] = v[s];
                kappa[s * nl + l] = -quad.weights[l] * d[s];
            }
        }
        let (b, zero) = (basis.values_at(derived.z0s[nl - 1]), basis.values_at(derived.z0s[0]));
        for s in 0..n {
            kappa[s * nl + nl - 1] += b[s];
            kappa[s * nl] -= zero[s];
        }
        let weight = grid.r_weights().iter().zip(grid.r_nodes()).map(|(w, r)| w * (2.0 * lambda * r).exp()).collect();
        let nz = grid.nz();
        let mut p_phi = vec![0.0; grid.n_phi * nz * nl];
        let mut p_z = vec![0.0; grid.n_phi * nz * nl];
        for l in 0..nl {
            for i in 0..grid.n_phi {
                for j in 0..nz {
                    let src = (l * grid.n_phi + i) * nz + j;
                    p_phi[(i * nz + j) * nl + l] = derived.p_phi[src];
                    p_z[(i * nz + j) * nl + l] = derived.p_z[src];
                }
            }
        }
        Ok(Functional {
            grid,
            basis: basis.clone(),
            lambda,
            u_floor,
            n,
            nl,
            psi,
            kappa,
            weight,
            p_phi,
            p_z,
            g0: derived.g0.clone(),
            gb: derived.gb.clone(),
            a: basis.a_matrix().to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of z0 samples.
    pub fn sources(&self) -> usize {
        self.nl
    }

    /// `Psi_s(z0_l)` for all s.
    pub fn psi_row(&self, l: usize) -> &[f64] {
        &self.psi[l * self.n..(l + 1) * self.n]
    }

    /// Copies the data coefficients `G0`, `GB` into the end planes.
    pub fn pin(&self, v: &mut SemiDiscreteField) {
        let n = self.n;
        for m in 0..self.grid.nr() {
            for i in 0..self.grid.n_phi {
                let k = (m * self.grid.n_phi + i) * n;
                v.node_mut(m, i, 0).copy_from_slice(&self.g0[k..k + n]);
                v.node_mut(m, i, self.grid.n_z).copy_from_slice(&self.gb[k..k + n]);
            }
        }
    }

    /// Samples `u` and `sqrt(max(u, u_floor))`, indexed `(node * L + l)`.
    fn samples(&self, v: &SemiDiscreteField) -> (Vec<f64>, Vec<f64>) {
        let (n, nl) = (self.n, self.nl);
        let mut u = vec![0.0; self.grid.len() * nl];
        u.par_chunks_mut(nl).enumerate().for_each(|(k, out)| {
            let node = &v.values[k * n..(k + 1) * n];
            for (l, o) in out.iter_mut().enumerate() {
                *o = node.iter().zip(&self.psi[l * n..(l + 1) * n]).map(|(a, b)| a * b).sum();
            }
        });
        let w = u.par_iter().map(|x| x.max(self.u_floor).sqrt()).collect();
        (u, w)
    }

    fn at(&self, m: usize, i: usize, j: usize) -> usize {
        self.grid.index(m, i, j) * self.nl
    }

    /// `T_phi`, `T_z` at every r-node of column `(i, j)`; one-sided z-differences on end planes.
    fn brackets(&self, w: &[f64], i: usize, j: usize) -> Brackets {
        let g = &self.grid;
        let (nr, nl, np) = (g.nr(), self.nl, g.n_phi);
        let r = g.r_nodes();
        let mut d_phi = vec![0.0; nr * nl];
        let mut d_z = vec![0.0; nr * nl];
        for m in 0..nr {
            let (ip, im) = (self.at(m, i + 1, j), self.at(m, i + np - 1, j));
            for l in 0..nl {
                d_phi[m * nl + l] = (w[ip + l] - w[im + l]) / (2.0 * g.h_phi);
            }
            if j == 0 {
                let (a, b, c) = (self.at(m, i, 0), self.at(m, i, 1), self.at(m, i, 2));
                for l in 0..nl {
                    d_z[m * nl + l] = (-3.0 * w[a + l] + 4.0 * w[b + l] - w[c + l]) / (2.0 * g.h_z);
                }
            } else if j == g.n_z {
                let (a, b, c) = (self.at(m, i, j), self.at(m, i, j - 1), self.at(m, i, j - 2));
                for l in 0..nl {
                    d_z[m * nl + l] = (3.0 * w[a + l] - 4.0 * w[b + l] + w[c + l]) / (2.0 * g.h_z);
                }
            } else {
                let (up, dn) = (self.at(m, i, j + 1), self.at(m, i, j - 1));
                for l in 0..nl {
                    d_z[m * nl + l] = (w[up + l] - w[dn + l]) / (2.0 * g.h_z);
                }
            }
        }
        let col = (i % np * g.nz() + j) * nl;
        let mut t_phi = vec![0.0; nr * nl];
        let mut t_z = vec![0.0; nr * nl];
        let (mut acc_phi, mut acc_z) = (vec![0.0; nl], vec![0.0; nl]);
        for m in (0..nr).rev() {
            if m + 1 < nr {
                let half = 0.5 * (r[m + 1] - r[m]);
                for l in 0..nl {
                    acc_phi[l] += half * (d_phi[m * nl + l] + d_phi[(m + 1) * nl + l]);
                    acc_z[l] += half * (d_z[m * nl + l] + d_z[(m + 1) * nl + l]);
                }
            }
            for l in 0..nl {
                t_phi[m * nl + l] = -acc_phi[l] + self.p_phi[col + l];
                t_z[m * nl + l] = -acc_z[l] + self.p_z[col + l];
            }
        }
        Brackets { t_phi, t_z }
    }

    /// Interior columns `(i, j)` in residual order.
    fn interior_columns(&self) -> Vec<(usize, usize)> {
        (0..self.grid.n_phi).flat_map(|i| (1..self.grid.n_z).map(move |j| (i, j))).collect()
    }

    fn clamp_stats(&self, u: &[f64]) -> (f64, bool) {
        let g = &self.grid;
        let mut clamped = 0usize;
        let mut total = 0usize;
        for m in 0..g.nr() {
            for i in 0..g.n_phi {
                for j in 1..g.n_z {
                    let k = self.at(m, i, j);
                    clamped += u[k..k + self.nl].iter().filter(|x| **x < self.u_floor).count();
                    total += self.nl;
                }
            }
        }
        let frac = clamped as f64 / total as f64;
        (frac, frac > 0.5)
    }

    /// `F = A_N V + S` of one column, indexed `(m * N + s)`, unweighted.
    fn column_residual(&self, v: &SemiDiscreteField, br: &Brackets, i: usize, j: usize) -> Vec<f64> {
        let (nr, nl, n) = (self.grid.nr(), self.nl, self.n);
        let r = self.grid.r_nodes();
        let mut out = vec![0.0; nr * n];
        let mut q = vec![0.0; nl];
        for m in 0..nr {
            let inv_r2 = 1.0 / (r[m] * r[m]);
            for l in 0..nl {
                let k = m * nl + l;
                q[l] = br.t_phi[k] * br.t_phi[k] * inv_r2 + br.t_z[k] * br.t_z[k];
            }
            let node = v.node(m, i, j);
            for s in 0..n {
                let av: f64 = (0..n).map(|k| self.a[s * n + k] * node[k]).sum();
                let sv: f64 = self.kappa[s * nl..(s + 1) * nl].iter().zip(&q).map(|(a, b)| a * b).sum();
                out[m * n + s] = av + sv;
            }
        }
        out
    }

    /// `J(V)`.
    pub fn value(&self, v: &SemiDiscreteField) -> Evaluation {
        let (u, w) = self.samples(v);
        let parts: Vec<f64> = self
            .interior_columns()
            .par_iter()
            .map(|&(i, j)| {
                let br = self.brackets(&w, i, j);
                let f = self.column_residual(v, &br, i, j);
                f.chunks(self.n).zip(&self.weight).map(|(fm, wm)| wm * fm.iter().map(|x| x * x).sum::<f64>()).sum()
            })
            .collect();
        let (clamped_fraction, degenerate) = self.clamp_stats(&u);
        Evaluation { j: parts.iter().sum(), clamped_fraction, degenerate }
    }

    /// Residuals and brackets at `v`, reusable for Jacobian products.
    pub fn linearize<'a>(&'a self, v: &SemiDiscreteField) -> Linearization<'a> {
        let (u, w) = self.samples(v);
        let cols = self.interior_columns();
        let states: Vec<(Brackets, Vec<f64>)> = cols
            .par_iter()
            .map(|&(i, j)| {
                let br = self.brackets(&w, i, j);
                let mut f = self.column_residual(v, &br, i, j);
                for (fm, wm) in f.chunks_mut(self.n).zip(&self.weight) {
                    let s = wm.sqrt();
                    fm.iter_mut().for_each(|x| *x *= s);
                }
                (br, f)
            })
            .collect();
        let mut residual = Vec::with_capacity(cols.len() * self.grid.nr() * self.n);
        let mut brackets = Vec::with_capacity(cols.len());
        for (br, f) in states {
            residual.extend(f);
            brackets.push(br);
        }
        let (clamped_fraction, degenerate) = self.clamp_stats(&u);
        let j = residual.iter().map(|x| x * x).sum();
        Linearization {
            functional: self,
            u,
            w,
            cols,
            brackets,
            residual,
            evaluation: Evaluation { j, clamped_fraction, degenerate },
        }
    }

    /// `J(V)` and its gradient with respect to every entry of `V`; end planes get 0.
    pub fn value_and_gradient(&self, v: &SemiDiscreteField) -> (Evaluation, SemiDiscreteField) {
        let lin = self.linearize(v);
        (lin.evaluation, lin.gradient())
    }

    /// `A_N V` and `S(V)` on interior nodes, each flattened in `(m, i, j, s)` order.
    pub fn residual_parts(&self, v: &SemiDiscreteField) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (_, w) = self.samples(v);
        let (n, nl) = (self.n, self.nl);
        let r = g.r_nodes();
        let mut av_all = Vec::new();
        let mut s_all = Vec::new();
        for m in 0..g.nr() {
            for i in 0..g.n_phi {
                for j in 1..g.n_z {
                    let br = self.brackets(&w, i, j);
                    let q: Vec<f64> = (0..nl)
                        .map(|l| {
                            let k = m * nl + l;
                            br.t_phi[k].powi(2) / (r[m] * r[m]) + br.t_z[k].powi(2)
                        })
                        .collect();
                    let node = v.node(m, i, j);
                    for s in 0..n {
                        av_all.push((0..n).map(|k| self.a[s * n + k] * node[k]).sum());
                        s_all.push(self.kappa[s * nl..(s + 1) * nl].iter().zip(&q).map(|(a, b)| a * b).sum());
                    }
                }
            }
        }
        (av_all, s_all)
    }

    /// `n^2 = u + Q` at every node and z0 sample, indexed `(node * L + l)`.
    pub fn n_squared_samples(&self, v: &SemiDiscreteField) -> Vec<f64> {
        let g = &self.grid;
        let (u, w) = self.samples(v);
        let (nr, nl) = (g.nr(), self.nl);
        let r = g.r_nodes();
        let cols: Vec<(usize, usize)> = (0..g.n_phi).flat_map(|i| (0..g.nz()).map(move |j| (i, j))).collect();
        let parts: Vec<Brackets> = cols.par_iter().map(|&(i, j)| self.brackets(&w, i, j)).collect();
        let mut out = vec![0.0; g.len() * nl];
        for (&(i, j), br) in cols.iter().zip(&parts) {
            for m in 0..nr {
                let k = self.at(m, i, j);
                for l in 0..nl {
                    let b = m * nl + l;
                    out[k + l] = u[k + l] + br.t_phi[b].powi(2) / (r[m] * r[m]) + br.t_z[b].powi(2);
                }
            }
        }
        out
    }
}

/// Weighted residual vector `sqrt(w_m e^{2 lambda r_m}) F` at a fixed `V`, with
/// products by its Jacobian. Residuals are ordered by interior column
/// `(i, j)`, then r-node, then basis index.
pub struct Linearization<'a> {
    functional: &'a Functional,
    u: Vec<f64>,
    w: Vec<f64>,
    cols: Vec<(usize, usize)>,
    brackets: Vec<Brackets>,
    pub residual: Vec<f64>,
    pub evaluation: Evaluation,
}

impl<'a> Linearization<'a> {
    /// Gradient of `J = |residual|^2`.
    pub fn gradient(&self) -> SemiDiscreteField {
        let y: Vec<f64> = self.residual.iter().map(|x| 2.0 * x).collect();
        self.apply_transpose(&y)
    }

    /// `d sqrt(max(u, floor))` for a coefficient perturbation; zero on the end planes.
    fn d_sqrt(&self, dv: &SemiDiscreteField) -> Vec<f64> {
        let f = self.functional;
        let (n, nl, nz, nzp) = (f.n, f.nl, f.grid.nz(), f.grid.n_z);
        let mut dw = vec![0.0; self.u.len()];
        dw.par_chunks_mut(nl).enumerate().for_each(|(node, out)| {
            let j = node % nz;
            if j == 0 || j == nzp {
                return;
            }
            let d = &dv.values[node * n..(node + 1) * n];
            for (l, o) in out.iter_mut().enumerate() {
                let k = node * nl + l;
                if self.u[k] > f.u_floor {
                    let du: f64 = d.iter().zip(&f.psi[l * n..(l + 1) * n]).map(|(a, b)| a * b).sum();
                    *o = du / (2.0 * self.w[k]);
                }
            }
        });
        dw
    }

    /// Jacobian times a coefficient perturbation; end-plane entries of `dv` are ignored.
    pub fn apply(&self, dv: &SemiDiscreteField) -> Vec<f64> {
        let f = self.functional;
        let g = &f.grid;
        let (nr, nl, n, np) = (g.nr(), f.nl, f.n, g.n_phi);
        let r = g.r_nodes();
        let dw = self.d_sqrt(dv);
        let parts: Vec<Vec<f64>> = self
            .cols
            .par_iter()
            .zip(&self.brackets)
            .map(|(&(i, j), br)| {
                let mut acc_phi = vec![0.0; nl];
                let mut acc_z = vec![0.0; nl];
                let mut prev_phi = vec![0.0; nl];
                let mut prev_z = vec![0.0; nl];
                let mut out = vec![0.0; nr * n];
                let mut dq = vec![0.0; nl];
                for m in (0..nr).rev() {
                    let (ip, im) = (f.at(m, i + 1, j), f.at(m, i + np - 1, j));
                    let (up, dn) = (f.at(m, i, j + 1), f.at(m, i, j - 1));
                    let half = if m + 1 < nr { 0.5 * (r[m + 1] - r[m]) } else { 0.0 };
                    let inv_r2 = 1.0 / (r[m] * r[m]);
                    for l in 0..nl {
                        let dp = (dw[ip + l] - dw[im + l]) / (2.0 * g.h_phi);
                        let dz = (dw[up + l] - dw[dn + l]) / (2.0 * g.h_z);
                        acc_phi[l] += half * (dp + prev_phi[l]);
                        acc_z[l] += half * (dz + prev_z[l]);
                        prev_phi[l] = dp;
                        prev_z[l] = dz;
                        let k = m * nl + l;
                        dq[l] = -2.0 * br.t_phi[k] * acc_phi[l] * inv_r2 - 2.0 * br.t_z[k] * acc_z[l];
                    }
                    let node = dv.node(m, i, j);
                    let sw = f.weight[m].sqrt();
                    for s in 0..n {
                        let av: f64 = (0..n).map(|k| f.a[s * n + k] * node[k]).sum();
                        let sv: f64 = f.kappa[s * nl..(s + 1) * nl].iter().zip(&dq).map(|(a, b)| a * b).sum();
                        out[m * n + s] = sw * (av + sv);
                    }
                }
                out
            })
            .collect();
        parts.concat()
    }

    /// Transposed Jacobian times a residual-space vector; end planes get 0.
    pub fn apply_transpose(&self, y: &[f64]) -> SemiDiscreteField {
        let f = self.functional;
        let g = &f.grid;
        let (nr, nl, n, nz, np) = (g.nr(), f.nl, f.n, g.nz(), g.n_phi);
        let r = g.r_nodes();
        let stride = nr * n;
        let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = self
            .brackets
            .par_iter()
            .enumerate()
            .map(|(c, br)| {
                let ys = &y[c * stride..(c + 1) * stride];
                let mut vbar = vec![0.0; nr * n];
                let mut qbar = vec![0.0; nr * nl];
                for m in 0..nr {
                    let sw = f.weight[m].sqrt();
                    for s in 0..n {
                        let fb = sw * ys[m * n + s];
                        for k in 0..n {
                            vbar[m * n + k] += f.a[s * n + k] * fb;
                        }
                        for l in 0..nl {
                            qbar[m * nl + l] += f.kappa[s * nl + l] * fb;
                        }
                    }
                }
                // Adjoint of T = -I + p, Q = T_phi^2 / r^2 + T_z^2, I = reverse cumulative trapezoid.
                let mut dbar_phi = vec![0.0; nr * nl];
                let mut dbar_z = vec![0.0; nr * nl];
                let (mut c_phi, mut c_z) = (vec![0.0; nl], vec![0.0; nl]);
                for m in 0..nr {
                    let inv_r2 = 1.0 / (r[m] * r[m]);
                    for l in 0..nl {
                        let k = m * nl + l;
                        c_phi[l] -= 2.0 * br.t_phi[k] * qbar[k] * inv_r2;
                        c_z[l] -= 2.0 * br.t_z[k] * qbar[k];
                    }
                    // Interval [r_m, r_{m+1}] receives the prefix sum through m at both ends.
                    if m + 1 < nr {
                        let half = 0.5 * (r[m + 1] - r[m]);
                        for l in 0..nl {
                            dbar_phi[m * nl + l] += half * c_phi[l];
                            dbar_phi[(m + 1) * nl + l] += half * c_phi[l];
                            dbar_z[m * nl + l] += half * c_z[l];
                            dbar_z[(m + 1) * nl + l] += half * c_z[l];
                        }
                    }
                }
                (vbar, dbar_phi, dbar_z)
            })
            .collect();
        // Scatter adjoint seeds to node order.
        let mut dphi = vec![0.0; g.len() * nl];
        let mut dz = vec![0.0; g.len() * nl];
        let mut grad = SemiDiscreteField::zeros(g, n);
        for (&(i, j), (vbar, dbar_phi, dbar_z)) in self.cols.iter().zip(&parts) {
            for m in 0..nr {
                let k = f.at(m, i, j);
                dphi[k..k + nl].copy_from_slice(&dbar_phi[m * nl..(m + 1) * nl]);
                dz[k..k + nl].copy_from_slice(&dbar_z[m * nl..(m + 1) * nl]);
                grad.node_mut(m, i, j).copy_from_slice(&vbar[m * n..(m + 1) * n]);
            }
        }
        let (hp, hz) = (g.h_phi, g.h_z);
        grad.values.par_chunks_mut(n).enumerate().for_each(|(node, out)| {
            let j = node % nz;
            if j == 0 || j == g.n_z {
                out.iter_mut().for_each(|x| *x = 0.0);
                return;
            }
            let m = node / (nz * np);
            let i = (node / nz) % np;
            let (ip, im) = (f.at(m, i + 1, j), f.at(m, i + np - 1, j));
            let (up, dn) = (f.at(m, i, j + 1), f.at(m, i, j - 1));
            let k = node * nl;
            for l in 0..nl {
                let mut wbar = (dphi[im + l] - dphi[ip + l]) / (2.0 * hp);
                if j > 1 {
                    wbar += dz[dn + l] / (2.0 * hz);
                }
                if j + 1 < g.n_z {
                    wbar -= dz[up + l] / (2.0 * hz);
                }
                if self.u[k + l] > f.u_floor {
                    let ubar = wbar / (2.0 * self.w[k + l]);
                    for (o, p) in out.iter_mut().zip(&f.psi[l * n..(l + 1) * n]) {
                        *o += p * ubar;
                    }
                }
            }
        });
        grad
    }
}
