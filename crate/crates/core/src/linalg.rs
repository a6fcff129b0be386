//! Linear operators and the small amount of numerical linear algebra the
//! solvers share.

use nalgebra::DMatrix;

/// A real linear map `R^ncols -> R^nrows` given by its forward and adjoint
/// actions.
///
/// Dense matrices implement this directly. Structured operators (wavelet
/// synthesis, finite differences) only provide the actions, and solvers fall
/// back to matrix-free methods for them.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// `out = Aᵀ y`
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);

    /// The explicit matrix, when the operator is stored densely.
    fn as_dense(&self) -> Option<&DMatrix<f64>> {
        None
    }

    /// Column `j` of the operator.
    fn column(&self, j: usize, out: &mut [f64]) {
        if let Some(a) = self.as_dense() {
            out.copy_from_slice(a.column(j).as_slice());
            return;
        }
        let mut e = vec![0.0; self.ncols()];
        e[j] = 1.0;
        self.apply(&e, out);
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.column(j).iter()) {
                    *o += a * xj;
                }
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.column(j).as_slice(), y);
        }
    }

    fn as_dense(&self) -> Option<&DMatrix<f64>> {
        Some(self)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint(y, out)
    }
    fn as_dense(&self) -> Option<&DMatrix<f64>> {
        (**self).as_dense()
    }
    fn column(&self, j: usize, out: &mut [f64]) {
        (**self).column(j, out)
    }
}

/// The identity on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[j] = 1.0;
    }
}

/// Builds the explicit matrix of any operator, one column at a time.
pub fn to_dense<A: LinearOperator + ?Sized>(op: &A) -> DMatrix<f64> {
    if let Some(a) = op.as_dense() {
        return a.clone();
    }
    let mut out = DMatrix::zeros(op.nrows(), op.ncols());
    let mut col = vec![0.0; op.nrows()];
    for j in 0..op.ncols() {
        op.column(j, &mut col);
        out.column_mut(j).copy_from_slice(&col);
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest singular value squared, `‖A‖₂²`, by power iteration on `AᵀA`.
pub fn operator_norm_sq<A: LinearOperator + ?Sized>(op: &A, iters: usize) -> f64 {
    let n = op.ncols();
    // Deterministic, non-degenerate start.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
    let mut av = vec![0.0; op.nrows()];
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iters {
        let nv = norm2(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut av);
        op.apply_adjoint(&av, &mut w);
        let next = dot(&v, &w);
        std::mem::swap(&mut v, &mut w);
        if (next - estimate).abs() <= 1e-12 * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite system `M x = b`
/// given only the action of `M`. `x` holds the initial guess on entry.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], x: &mut [f64], rel_tol: f64, max_iters: usize) -> CgOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut mx = vec![0.0; n];
    apply(x, &mut mx);
    let mut r: Vec<f64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut mp = vec![0.0; n];
    let mut iterations = 0;
    while iterations < max_iters && rr.sqrt() > rel_tol * b_norm {
        apply(&p, &mut mp);
        let pmp = dot(&p, &mp);
        if pmp <= 0.0 || !pmp.is_finite() {
            break;
        }
        let alpha = rr / pmp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    CgOutcome {
        iterations,
        relative_residual: rr.sqrt() / b_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_adjoint_matches_transpose() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let mut y = [0.0; 2];
        LinearOperator::apply(&a, &[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, [6.0, 3.5]);
        let mut x = [0.0; 3];
        a.apply_adjoint(&[1.0, 2.0], &mut x);
        assert_eq!(x, [-1.0, 3.0, 11.0]);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let est = operator_norm_sq(&a, 500);
        assert!((est - 9.0).abs() < 1e-8, "{est}");
    }

    #[test]
    fn cg_solves_spd_system() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let out = conjugate_gradient(|v, o| LinearOperator::apply(&m, v, o), &b, &mut x, 1e-14, 50);
        let exact = m.clone().lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - exact[i]).abs() < 1e-12);
        }
        assert!(out.iterations <= 4);
    }

    #[test]
    fn to_dense_roundtrips_identity() {
        let d = to_dense(&IdentityOperator(4));
        assert_eq!(d, DMatrix::identity(4, 4));
    }
}
