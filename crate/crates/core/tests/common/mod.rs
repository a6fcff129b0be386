//! Reference implementations used as oracles. None of these call into the
//! solvers under test; they share only the matrix type.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn unit_column_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(m, n, |_, _| gaussian(rng));
    for mut c in a.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    a
}

pub fn sparse_vector(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates
    for i in 0..k {
        let j = i + (rand::Rng::random_range(rng, 0..(n - i)));
        idx.swap(i, j);
    }
    let mut x = vec![0.0; n];
    for &j in &idx[..k] {
        x[j] = gaussian(rng);
    }
    x
}

pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}

/// Least squares on the chosen columns via SVD; full-length result.
pub fn lstsq(a: &DMatrix<f64>, cols: &[usize], y: &[f64]) -> Vec<f64> {
    let sub = a.select_columns(cols);
    let sol = sub
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-13)
        .unwrap();
    let mut x = vec![0.0; a.ncols()];
    for (p, &j) in cols.iter().enumerate() {
        x[j] = sol[p];
    }
    x
}

fn argmax_abs(v: &[f64], skip: &[bool]) -> usize {
    let mut best = usize::MAX;
    let mut bv = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if !skip[i] && x.abs() > bv {
            bv = x.abs();
            best = i;
        }
    }
    best
}

/// Classical OMP: pick the column most correlated with the residual,
/// re-solve least squares, repeat. Support in selection order.
pub fn linear_omp(a: &DMatrix<f64>, y: &[f64], k: usize, tol: f64) -> Vec<usize> {
    let mut support = Vec::new();
    let mut chosen = vec![false; a.ncols()];
    let mut r = y.to_vec();
    while support.len() < k && norm(&r) > tol {
        let corr = (a.transpose() * DVector::from_column_slice(&r)).as_slice().to_vec();
        let j = argmax_abs(&corr, &chosen);
        chosen[j] = true;
        support.push(j);
        let x = lstsq(a, &support, y);
        let ax = mat_vec(a, &x);
        r = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
    }
    support
}

fn largest(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].abs().partial_cmp(&values[i].abs()).unwrap().then(i.cmp(&j)));
    order.truncate(count);
    order.sort();
    order
}

/// Classical CoSaMP (Needell & Tropp), stopping on a small residual, a
/// repeated support, or the iteration cap. Support ascending.
pub fn linear_cosamp(a: &DMatrix<f64>, y: &[f64], k: usize, tol: f64, max_iters: usize) -> Vec<usize> {
    let n = a.ncols();
    let mut support: Vec<usize> = Vec::new();
    let mut x = vec![0.0; n];
    for _ in 0..max_iters {
        let ax = mat_vec(a, &x);
        let r: Vec<f64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        if norm(&r) <= tol {
            break;
        }
        let proxy = (a.transpose() * DVector::from_column_slice(&r)).as_slice().to_vec();
        let mut merged = largest(&proxy, 2 * k);
        merged.extend(&support);
        merged.sort();
        merged.dedup();
        let b = lstsq(a, &merged, y);
        let next = largest(&b, k);
        x = vec![0.0; n];
        for &j in &next {
            x[j] = b[j];
        }
        let stable = next == support;
        support = next;
        if stable {
            break;
        }
    }
    support
}

/// `argmin ‖Ω_Λ x‖²` subject to `Ax = y` through the KKT system.
pub fn kkt_solve(a: &DMatrix<f64>, omega: &DMatrix<f64>, cosupport: &[bool], y: &[f64]) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let rows: Vec<usize> = (0..omega.nrows()).filter(|&i| cosupport[i]).collect();
    let ol = omega.select_rows(&rows);
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&(2.0 * ol.transpose() * &ol));
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from_slice(y);
    let sol = k.lu().solve(&rhs).expect("singular KKT system");
    sol.rows(0, n).as_slice().to_vec()
}

/// Minimum-norm least-squares solution on the chosen columns.
pub fn pinv_solution(a: &DMatrix<f64>, cols: &[usize], y: &[f64]) -> Vec<f64> {
    let sub = a.select_columns(cols);
    let p = sub.pseudo_inverse(1e-12).unwrap();
    let s = p * DVector::from_column_slice(y);
    let mut x = vec![0.0; a.ncols()];
    for (q, &j) in cols.iter().enumerate() {
        x[j] = s[q];
    }
    x
}

fn exp_cost(cols: &[&[f64]], t: &[f64], y: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let u: f64 = cols.iter().zip(t).map(|(c, ti)| c[i] * ti).sum();
            (u.exp() - y[i]).powi(2)
        })
        .sum()
}

/// Exhaustive 1-D fit of `y ≈ exp(a_j t)` over every column: a dense grid
/// followed by golden-section refinement. Returns `(best column, value, cost)`.
pub fn best_single_exp_support(a: &DMatrix<f64>, y: &[f64]) -> (usize, f64, f64) {
    let mut best = (usize::MAX, 0.0, f64::INFINITY);
    for j in 0..a.ncols() {
        let col: Vec<f64> = a.column(j).iter().copied().collect();
        let f = |t: f64| exp_cost(&[&col], &[t], y);
        let (mut tb, mut fb) = (0.0, f(0.0));
        let mut t = -10.0;
        while t <= 10.0 {
            let v = f(t);
            if v < fb {
                tb = t;
                fb = v;
            }
            t += 0.01;
        }
        let (mut lo, mut hi) = (tb - 0.01, tb + 0.01);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = hi - phi * (hi - lo);
            let d = lo + phi * (hi - lo);
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let tm = 0.5 * (lo + hi);
        let fm = f(tm);
        if fm < best.2 {
            best = (j, tm, fm);
        }
    }
    best
}

/// Gauss-Newton with backtracking for `y ≈ exp(a_i s + a_j t)` from many
/// starts. Returns `(s, t, cost)`.
pub fn fit_exp_pair(ai: &[f64], aj: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let cols = [ai, aj];
    let mut best = (0.0, 0.0, f64::INFINITY);
    for s0 in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for t0 in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let mut p = [s0, t0];
            let mut cost = exp_cost(&cols, &p, y);
            for _ in 0..200 {
                let mut jtj = [[0.0; 2]; 2];
                let mut jtr = [0.0; 2];
                for i in 0..y.len() {
                    let e = (ai[i] * p[0] + aj[i] * p[1]).exp();
                    let r = e - y[i];
                    let g = [e * ai[i], e * aj[i]];
                    for u in 0..2 {
                        jtr[u] += g[u] * r;
                        for v in 0..2 {
                            jtj[u][v] += g[u] * g[v];
                        }
                    }
                }
                let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let d = [
                    -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det,
                    -(-jtj[1][0] * jtr[0] + jtj[0][0] * jtr[1]) / det,
                ];
                let mut step = 1.0;
                let mut moved = false;
                while step > 1e-12 {
                    let q = [p[0] + step * d[0], p[1] + step * d[1]];
                    let c = exp_cost(&cols, &q, y);
                    if c.is_finite() && c < cost {
                        p = q;
                        cost = c;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved || (d[0].abs() + d[1].abs()) * step < 1e-15 {
                    break;
                }
            }
            if cost < best.2 {
                best = (p[0], p[1], cost);
            }
        }
    }
    best
}

/// Exhaustive best 2-sparse Exp fit over all column pairs; full-length x.
pub fn best_pair_exp(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = a.ncols();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for i in 0..n {
        for j in i + 1..n {
            let (s, t, c) = fit_exp_pair(&cols[i], &cols[j], y);
            if c < best.0 {
                let mut x = vec![0.0; n];
                x[i] = s;
                x[j] = t;
                best = (c, x);
            }
        }
    }
    best.1
}

/// Cyclic coordinate descent for `‖y − Ax‖² + λ‖x‖₁`.
pub fn cd_lasso(a: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = a.ncols();
    let mut x = vec![0.0; n];
    let mut r = y.to_vec();
    let sq: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for j in 0..n {
            let col = a.column(j);
            let rho: f64 = col.iter().zip(&r).map(|(c, ri)| c * ri).sum::<f64>() + sq[j] * x[j];
            let new = rho.signum() * (rho.abs() - lambda / 2.0).max(0.0) / sq[j];
            let d = new - x[j];
            if d != 0.0 {
                for (ri, c) in r.iter_mut().zip(col.iter()) {
                    *ri -= c * d;
                }
                x[j] = new;
            }
            delta = delta.max(d.abs());
        }
        if delta < 1e-15 {
            break;
        }
    }
    x
}
