//! Projection onto the feasible set: pinned end planes and `u >= c` at the z0 samples.

use rayon::prelude::*;

use super::field::SemiDiscreteField;
use super::functional::Functional;

/// Smallest change of the node vector that lifts every sample of `u` to at least `floor`.
///
/// Solves `min |d|^2 / 2` subject to `E (v + d) >= floor`, where the rows of
/// `E` are the basis values at the z0 samples, by the dual active-set method of
/// Goldfarb and Idnani with identity Hessian. Returns whether the node was changed.
pub fn lift_node(rows: &[&[f64]], floor: f64, v: &mut [f64]) -> bool {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    // Target slightly above the floor so rounding cannot leave a sample below it.
    let target = floor * (1.0 + 1e-9) + 1e-15;
    let slack = |v: &[f64], l: usize| dot(v, rows[l]) - target;
    if (0..rows.len()).all(|l| slack(v, l) >= -1e-9 * floor) {
        return false;
    }
    let n = v.len();
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let tol = 1e-13;
    for _ in 0..4 * rows.len() + 8 {
        // Most violated constraint.
        let Some((p, sp)) = (0..rows.len())
            .map(|l| (l, slack(v, l)))
            .filter(|(l, s)| *s < -tol * (1.0 + floor) && !active.contains(l))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        let np = rows[p];
        let mut added = false;
        let mut sp = sp;
        let mut extra = 0.0;
        for _ in 0..n + 2 {
            let (z, r) = directions(rows, &active, np, n);
            let zz = dot(&z, np);
            let t2 = if zz > 1e-300 { -sp / zz } else { f64::INFINITY };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = mult[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let t = t1.min(t2);
            if !t.is_finite() {
                // Constraint set is infeasible along this normal; keep what we have.
                return true;
            }
            if t2.is_finite() {
                for (x, zi) in v.iter_mut().zip(&z) {
                    *x += t * zi;
                }
            }
            for (m, rk) in mult.iter_mut().zip(&r) {
                *m -= t * rk;
            }
            extra += t;
            sp = slack(v, p);
            if t2 <= t1 {
                active.push(p);
                mult.push(extra);
                added = true;
                break;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            mult.remove(k);
        }
        if !added {
            break;
        }
    }
    true
}

/// Primal direction `(I - N N^+) n_p` and dual direction `N^+ n_p` for the active normals `N`.
fn directions(rows: &[&[f64]], active: &[usize], np: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let q = active.len();
    if q == 0 {
        return (np.to_vec(), Vec::new());
    }
    // Solve (N^T N) r = N^T n_p.
    let mut gram = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    for a in 0..q {
        for b in 0..q {
            gram[a * q + b] = rows[active[a]].iter().zip(rows[active[b]]).map(|(x, y)| x * y).sum();
        }
        rhs[a] = rows[active[a]].iter().zip(np).map(|(x, y)| x * y).sum();
    }
    let r = solve_dense(&mut gram, &mut rhs, q);
    let mut z = np.to_vec();
    for (a, ra) in r.iter().enumerate() {
        for i in 0..n {
            z[i] -= ra * rows[active[a]][i];
        }
    }
    (z, r)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        let d = a[row * n + row];
        x[row] = if d.abs() < 1e-300 { 0.0 } else { s / d };
    }
    x
}

/// Pins the end planes to the data and lifts every interior node; returns the number of lifted nodes.
pub fn project_feasible(functional: &Functional, v: &mut SemiDiscreteField) -> usize {
    functional.pin(v);
    let g = functional.grid.clone();
    let rows: Vec<&[f64]> = (0..functional.sources()).map(|l| functional.psi_row(l)).collect();
    let floor = functional.u_floor;
    let n = v.n;
    let nz = g.nz();
    v.values
        .par_chunks_mut(n)
        .enumerate()
        .filter(|(node, _)| {
            let j = node % nz;
            j != 0 && j != g.n_z
        })
        .map(|(_, chunk)| usize::from(lift_node(&rows, floor, chunk)))
        .sum()
}

/// Smallest `u` over interior nodes and z0 samples.
pub fn min_interior_u(functional: &Functional, v: &SemiDiscreteField) -> f64 {
    let g = &functional.grid;
    let mut lo = f64::INFINITY;
    for m in 0..g.nr() {
        for i in 0..g.n_phi {
            for j in 1..g.n_z {
                let node = v.node(m, i, j);
                for l in 0..functional.sources() {
                    let u: f64 = node.iter().zip(functional.psi_row(l)).map(|(a, b)| a * b).sum();
                    lo = lo.min(u);
                }
            }
        }
    }
    lo
}
