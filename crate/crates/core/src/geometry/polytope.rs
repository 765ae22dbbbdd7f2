//! Distances from a point to the convex hull of finitely many vertices.
//!
//! Polyhedral norms reduce to a linear program over barycentric weights,
//! solved with a dense two-phase simplex method (Bland's rule, so it cannot
//! cycle). The Euclidean case uses Wolfe's minimum-norm-point algorithm,
//! which terminates after finitely many affine solves.

use alloc::vec;
use alloc::vec::Vec;

use super::{euclidean, Norm, Point};
use crate::float::abs;
use crate::linalg::dot;

const PIVOT_EPS: f64 = 1e-12;

/// `min ‖p − Σ λ_j v_j‖` over the probability simplex, for L1 / weighted L1 / L∞.
pub(super) fn polyhedral_distance(vertices: &[Point], p: &[f64], norm: &Norm) -> f64 {
    let d = p.len();
    let m = vertices.len();
    // Columns: λ (m) | e⁺ (d) | e⁻ (d) | [t | s (d)] for L∞.
    let linf = matches!(norm, Norm::LInf);
    let n = m + 2 * d + if linf { 1 + d } else { 0 };
    let rows = d + 1 + if linf { d } else { 0 };
    let mut a = vec![vec![0.0; n]; rows];
    let mut b = vec![0.0; rows];
    for i in 0..d {
        for (j, v) in vertices.iter().enumerate() {
            a[i][j] = v[i];
        }
        a[i][m + i] = -1.0;
        a[i][m + d + i] = 1.0;
        b[i] = p[i];
    }
    a[d][..m].fill(1.0);
    b[d] = 1.0;
    let mut c = vec![0.0; n];
    match norm {
        Norm::L1 => c[m..m + 2 * d].iter_mut().for_each(|x| *x = 1.0),
        Norm::WeightedL1 { weights } => {
            for i in 0..d {
                c[m + i] = weights[i];
                c[m + d + i] = weights[i];
            }
        }
        Norm::LInf => {
            let t = m + 2 * d;
            c[t] = 1.0;
            for i in 0..d {
                let row = d + 1 + i;
                a[row][m + i] = 1.0;
                a[row][m + d + i] = 1.0;
                a[row][t] = -1.0;
                a[row][t + 1 + i] = 1.0;
            }
        }
        Norm::L2 => unreachable!("Euclidean hull distance uses the min-norm-point routine"),
    }
    minimize(a, b, &c).map(|v| v.max(0.0)).unwrap_or(f64::INFINITY)
}

/// Dense two-phase simplex: `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
/// Returns the optimal value, or `None` if infeasible.
fn minimize(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, c: &[f64]) -> Option<f64> {
    let rows = a.len();
    let n = c.len();
    for i in 0..rows {
        if b[i] < 0.0 {
            b[i] = -b[i];
            a[i].iter_mut().for_each(|x| *x = -*x);
        }
    }
    let width = n + rows + 1;
    let rhs = width - 1;
    let mut t = vec![vec![0.0; width]; rows];
    for i in 0..rows {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][rhs] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + rows).collect();

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    obj[n..n + rows].fill(1.0);
    price_out(&mut obj, &t, &basis);
    run_simplex(&mut t, &mut obj, &mut basis, width - 1);
    if -obj[rhs] > 1e-9 * (1.0 + b.iter().fold(0.0f64, |m, x| m.max(*x))) {
        return None;
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..rows {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| abs(t[i][j]) > PIVOT_EPS) {
                pivot(&mut t, &mut obj, &mut basis, i, j);
            }
        }
    }

    // Phase 2 on the original columns only.
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    price_out(&mut obj, &t, &basis);
    run_simplex(&mut t, &mut obj, &mut basis, n);
    Some(-obj[rhs])
}

fn price_out(obj: &mut [f64], t: &[Vec<f64>], basis: &[usize]) {
    for (i, &bj) in basis.iter().enumerate() {
        let cb = obj[bj];
        if cb != 0.0 {
            for (o, x) in obj.iter_mut().zip(&t[i]) {
                *o -= cb * x;
            }
        }
    }
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|x| *x /= p);
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for (x, y) in obj.iter_mut().zip(&pivot_row) {
            *x -= f * y;
        }
    }
    basis[row] = col;
}

/// Bland's rule; `allowed` bounds the columns that may enter.
fn run_simplex(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], allowed: usize) {
    let rhs = obj.len() - 1;
    loop {
        let Some(col) = (0..allowed).find(|&j| obj[j] < -PIVOT_EPS) else {
            return;
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in t.iter().enumerate() {
            if r[col] > PIVOT_EPS {
                let ratio = r[rhs] / r[col];
                let better = match best {
                    None => true,
                    Some((bi, br)) => ratio < br - 1e-15 || (ratio <= br + 1e-15 && basis[i] < basis[bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        match best {
            // Unbounded cannot happen for bounded distance programs.
            None => return,
            Some((row, _)) => pivot(t, obj, basis, row, col),
        }
    }
}

/// Euclidean distance from `p` to the hull of `vertices` (Wolfe's algorithm).
pub(super) fn euclidean_distance(vertices: &[Point], p: &[f64]) -> f64 {
    let q: Vec<Vec<f64>> = vertices.iter().map(|v| v.iter().zip(p).map(|(a, b)| a - b).collect()).collect();
    let scale = q.iter().map(|v| dot(v, v)).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let start = (0..q.len()).min_by(|&a, &b| dot(&q[a], &q[a]).total_cmp(&dot(&q[b], &q[b]))).unwrap();
    let mut active = vec![start];
    let mut weights = vec![1.0];
    let mut x = q[start].clone();

    for _ in 0..(50 * (q.len() + p.len()) + 100) {
        let xx = dot(&x, &x);
        if xx <= 1e-30 * scale {
            return euclidean(&x);
        }
        let (j, xq) = (0..q.len())
            .map(|k| (k, dot(&x, &q[k])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xq <= 1e-14 * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        weights.push(0.0);
        loop {
            let Some(alpha) = affine_minimizer(&q, &active) else {
                return euclidean(&x);
            };
            if alpha.iter().all(|a| *a > 1e-15) {
                weights = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= 1e-15 {
                    let denom = w - a;
                    if denom > 0.0 {
                        theta = theta.min(w / denom);
                    }
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < active.len() {
                if weights[k] <= 1e-15 {
                    active.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.is_empty() {
                return euclidean(&x);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        x = vec![0.0; p.len()];
        for (w, &k) in weights.iter().zip(&active) {
            for (xi, qi) in x.iter_mut().zip(&q[k]) {
                *xi += w * qi;
            }
        }
    }
    euclidean(&x)
}

/// Weights of the minimum-norm point of the affine hull of `q[active]`.
fn affine_minimizer(q: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut m = vec![vec![0.0; k + 1]; k + 1];
    let mut rhs = vec![0.0; k + 1];
    for a in 0..k {
        for b in 0..k {
            m[a][b] = dot(&q[active[a]], &q[active[b]]);
        }
        m[a][k] = 1.0;
        m[k][a] = 1.0;
    }
    rhs[k] = 1.0;
    let sol = gauss_solve(m, rhs)?;
    Some(sol[..k].to_vec())
}

fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m.iter().flatten().fold(0.0f64, |s, x| s.max(abs(*x)));
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| abs(m[a][col]).total_cmp(&abs(m[b][col])))?;
        if abs(m[piv][col]) <= 1e-14 * scale {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                let (top, bottom) = m.split_at_mut(r);
                for (x, p) in bottom[0][col..n].iter_mut().zip(&top[col][col..n]) {
                    *x -= f * p;
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}
