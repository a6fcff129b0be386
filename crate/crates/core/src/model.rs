//! The composite measurement model `f(x) = g(Ax)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::linalg::{norm2, LinearOperator};

/// A scalar function applied elementwise after the linear map.
pub trait ScalarMap {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;

    /// Largest pre-activation accepted by [`MeasurementModel::apply`].
    fn argument_limit(&self) -> f64 {
        f64::INFINITY
    }
}

/// The elementwise nonlinearities used by the recovery experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    Identity,
    Exp,
    /// `sign(t)·ln(1+|t|)`: a logarithm defined on the whole real line.
    SignedLog,
}

/// Pre-activations above this are rejected for [`Nonlinearity::Exp`].
pub const EXP_ARGUMENT_LIMIT: f64 = 700.0;

impl Nonlinearity {
    pub const ALL: [Nonlinearity; 3] = [Self::Identity, Self::Exp, Self::SignedLog];

    /// Short name used on the command line and in CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Exp => "exp",
            Self::SignedLog => "slog",
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Self::Identity => v,
            Self::Exp => v.ln(),
            Self::SignedLog => v.signum() * v.abs().exp_m1(),
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Self::Identity),
            "exp" => Ok(Self::Exp),
            "slog" | "log" | "signedlog" => Ok(Self::SignedLog),
            other => Err(Error::InvalidOption(format!("unknown model '{other}'"))),
        }
    }
}

impl ScalarMap for Nonlinearity {
    fn value(&self, t: f64) -> f64 {
        match self {
            Self::Identity => t,
            Self::Exp => t.exp(),
            Self::SignedLog => t.signum() * t.abs().ln_1p(),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Exp => t.exp(),
            Self::SignedLog => 1.0 / (1.0 + t.abs()),
        }
    }

    fn argument_limit(&self) -> f64 {
        match self {
            Self::Exp => EXP_ARGUMENT_LIMIT,
            _ => f64::INFINITY,
        }
    }
}

/// `f(x) = g(Ax)` with `A` an `m × n` linear operator and `g` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel<A = DMatrix<f64>, G = Nonlinearity> {
    op: A,
    g: G,
}

impl<A: LinearOperator, G: ScalarMap> MeasurementModel<A, G> {
    pub fn new(op: A, g: G) -> Result<Self> {
        if op.nrows() == 0 || op.ncols() == 0 {
            return Err(Error::InvalidOption(
                "measurement operator must have at least one row and column".into(),
            ));
        }
        if let Some(a) = op.as_dense() {
            if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "measurement matrix",
                    row: pos % a.nrows(),
                });
            }
        }
        Ok(Self { op, g })
    }

    pub fn op(&self) -> &A {
        &self.op
    }

    pub fn nonlinearity(&self) -> &G {
        &self.g
    }

    /// Number of measurements `m`.
    pub fn m(&self) -> usize {
        self.op.nrows()
    }

    /// Number of unknowns `n`.
    pub fn n(&self) -> usize {
        self.op.ncols()
    }

    /// `Ax`, checked against the nonlinearity's overflow guard.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("model input", self.n(), x.len())?;
        let mut u = vec![0.0; self.m()];
        self.op.apply(x, &mut u);
        let limit = self.g.argument_limit();
        for (row, &v) in u.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "pre-activation",
                    row,
                });
            }
            if v > limit {
                return Err(Error::Overflow { row, value: v, limit });
            }
        }
        Ok(u)
    }

    fn activate(&self, u: &[f64]) -> Result<Vec<f64>> {
        u.iter()
            .enumerate()
            .map(|(row, &t)| {
                let v = self.g.value(t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        context: "model output",
                        row,
                    })
                }
            })
            .collect()
    }

    /// Evaluates `g(Ax)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.pre_activation(x)?;
        self.activate(&u)
    }

    /// `‖y − f(x)‖₂`
    pub fn residual_norm(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len("observations", self.m(), y.len())?;
        let fx = self.apply(x)?;
        Ok(fx.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// Gradient of `‖y − f(x)‖₂²`, i.e. `2Aᵀ(g'(Ax) ⊙ (g(Ax) − y))`.
    pub fn residual_gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_len("observations", self.m(), y.len())?;
        let u = self.pre_activation(x)?;
        let mut weighted = Vec::with_capacity(u.len());
        for (row, (&t, &yi)) in u.iter().zip(y).enumerate() {
            let w = 2.0 * self.g.derivative(t) * (self.g.value(t) - yi);
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: "residual gradient",
                    row,
                });
            }
            weighted.push(w);
        }
        let mut grad = vec![0.0; self.n()];
        self.op.apply_adjoint(&weighted, &mut grad);
        Ok(grad)
    }

    /// Jacobian of `f` at `x` restricted to the columns in `support`:
    /// `diag(g'(Ax)) · A_S`.
    pub fn restricted_jacobian(&self, x: &[f64], support: &[usize]) -> Result<DMatrix<f64>> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        check_support(support, self.n())?;
        let u = self.pre_activation(x)?;
        let gp: Vec<f64> = u.iter().map(|&t| self.g.derivative(t)).collect();
        let mut jac = DMatrix::zeros(self.m(), support.len());
        let mut col = vec![0.0; self.m()];
        for (c, &j) in support.iter().enumerate() {
            self.op.column(j, &mut col);
            for (i, (&a, &d)) in col.iter().zip(&gp).enumerate() {
                let v = a * d;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "jacobian",
                        row: i,
                    });
                }
                jac[(i, c)] = v;
            }
        }
        Ok(jac)
    }
}

pub(crate) fn check_support(support: &[usize], n: usize) -> Result<()> {
    match support.iter().find(|&&j| j >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

/// Outcome of the finite-difference gradient check for one nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub nonlinearity: Nonlinearity,
    pub instances: usize,
    pub max_relative_error: f64,
}

/// Compares [`MeasurementModel::residual_gradient`] against central
/// differences of `‖y − f(x)‖²` built from `apply` alone. Instances have
/// `A`, `x` and `y` with i.i.d. standard normal entries.
pub fn gradient_check(
    g: Nonlinearity,
    instances: usize,
    m: usize,
    n: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let a = DMatrix::from_fn(m, n, |_, _| normal());
        let x: Vec<f64> = (0..n).map(|_| normal()).collect();
        let y: Vec<f64> = (0..m).map(|_| normal()).collect();
        let model = MeasurementModel::new(a, g)?;
        let analytic = model.residual_gradient(&x, &y)?;
        let cost = |z: &[f64]| -> Result<f64> {
            let fz = model.apply(z)?;
            Ok(fz.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum())
        };
        let mut numeric = vec![0.0; n];
        let mut probe = x.clone();
        for j in 0..n {
            probe[j] = x[j] + step;
            let up = cost(&probe)?;
            probe[j] = x[j] - step;
            let down = cost(&probe)?;
            probe[j] = x[j];
            numeric[j] = (up - down) / (2.0 * step);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm2(&numeric).max(f64::MIN_POSITIVE);
        worst = worst.max(norm2(&diff) / scale);
    }
    Ok(GradCheck {
        nonlinearity: g,
        instances,
        max_relative_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(rows: usize, cols: usize, data: &[f64], g: Nonlinearity) -> MeasurementModel {
        MeasurementModel::new(DMatrix::from_row_slice(rows, cols, data), g).unwrap()
    }

    #[test]
    fn apply_examples() {
        let id = model(2, 2, &[1.0, 0.0, 0.0, 1.0], Nonlinearity::Identity);
        assert_eq!(id.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let ex = model(1, 2, &[1.0, 1.0], Nonlinearity::Exp);
        assert_eq!(ex.apply(&[0.0, 0.0]).unwrap(), vec![1.0]);
        let sl = model(1, 1, &[2.0], Nonlinearity::SignedLog);
        assert_abs_diff_eq!(sl.apply(&[0.5]).unwrap()[0], 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn apply_rejects_bad_input() {
        let id = model(2, 2, &[1.0, 0.0, 0.0, 1.0], Nonlinearity::Identity);
        assert!(matches!(id.apply(&[1.0]), Err(Error::Dimension { .. })));
        let ex = model(2, 1, &[1.0, 800.0], Nonlinearity::Exp);
        assert!(matches!(ex.apply(&[1.0]), Err(Error::Overflow { row: 1, .. })));
    }

    #[test]
    fn gradient_examples() {
        let id = model(2, 2, &[1.0, 0.0, 0.0, 1.0], Nonlinearity::Identity);
        assert_eq!(id.residual_gradient(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            id.residual_gradient(&[0.0, 0.0], &[3.0, -1.0]).unwrap(),
            vec![-6.0, 2.0]
        );
        let ex = model(1, 1, &[1.0], Nonlinearity::Exp);
        assert_abs_diff_eq!(ex.residual_gradient(&[0.0], &[2.0]).unwrap()[0], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_examples_match_central_differences() {
        let h = 1e-5;
        let cases = [
            (
                model(2, 2, &[1.0, 0.0, 0.0, 1.0], Nonlinearity::Identity),
                vec![0.0, 0.0],
                vec![3.0, -1.0],
            ),
            (model(1, 1, &[1.0], Nonlinearity::Exp), vec![0.0], vec![2.0]),
        ];
        for (md, x, y) in cases {
            let grad = md.residual_gradient(&x, &y).unwrap();
            for j in 0..x.len() {
                let mut p = x.clone();
                p[j] += h;
                let up = md.residual_norm(&p, &y).unwrap().powi(2);
                p[j] -= 2.0 * h;
                let down = md.residual_norm(&p, &y).unwrap().powi(2);
                assert_abs_diff_eq!(grad[j], (up - down) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let id = model(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Nonlinearity::Identity);
        let j = id.restricted_jacobian(&[0.3, -1.0, 2.0], &[2, 0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 6.0, 4.0]));

        let ex = model(2, 1, &[1.0, 2.0], Nonlinearity::Exp);
        let j = ex.restricted_jacobian(&[0.0], &[0]).unwrap();
        assert_eq!(j.as_slice(), &[1.0, 2.0]);
        let h = 1e-6;
        let up = ex.apply(&[h]).unwrap();
        let down = ex.apply(&[-h]).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(j[(i, 0)], (up[i] - down[i]) / (2.0 * h), epsilon = 1e-8);
        }

        let sl = model(1, 1, &[1.0], Nonlinearity::SignedLog);
        assert_eq!(sl.restricted_jacobian(&[1.0], &[0]).unwrap()[(0, 0)], 0.5);

        assert_eq!(id.restricted_jacobian(&[0.0; 3], &[]), Err(Error::EmptySupport));
        assert!(matches!(
            id.restricted_jacobian(&[0.0; 3], &[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn inverse_roundtrip() {
        for g in Nonlinearity::ALL {
            let mut t = -20.0;
            while t <= 20.0 {
                assert!((g.inverse(g.value(t)) - t).abs() <= 1e-12, "{g:?} at {t}");
                t += 0.37;
            }
        }
        assert_eq!(Nonlinearity::Identity.value(Nonlinearity::Identity.inverse(3.25)), 3.25);
    }

    #[test]
    fn gradient_check_passes_for_all_kinds() {
        for g in Nonlinearity::ALL {
            let report = gradient_check(g, 20, 10, 25, 1e-5, 11).unwrap();
            assert!(report.max_relative_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn identity_gradient_is_normal_equations_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(6, 9, |_, _| StandardNormal.sample(&mut rng));
        let x = nalgebra::DVector::from_fn(9, |_, _| StandardNormal.sample(&mut rng));
        let y = nalgebra::DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        let expected = (a.transpose() * (&a * &x - &y)) * 2.0;
        let md = MeasurementModel::new(a, Nonlinearity::Identity).unwrap();
        let got = md.residual_gradient(x.as_slice(), y.as_slice()).unwrap();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    proptest! {
        #[test]
        fn nonlinearities_are_strictly_increasing(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for g in Nonlinearity::ALL {
                prop_assert!(g.value(lo) < g.value(hi));
                prop_assert!(g.derivative(lo) > 0.0);
            }
        }

        #[test]
        fn jacobian_columns_match_differences(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(10, 25, |_, _| StandardNormal.sample(&mut rng));
            let x: Vec<f64> = (0..25).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.3 * z }).collect();
            for g in Nonlinearity::ALL {
                let md = MeasurementModel::new(a.clone(), g).unwrap();
                let support = [1usize, 7, 19];
                let jac = md.restricted_jacobian(&x, &support).unwrap();
                for (c, &j) in support.iter().enumerate() {
                    let h = 1e-5;
                    let mut p = x.clone();
                    p[j] += h;
                    let up = md.apply(&p).unwrap();
                    p[j] -= 2.0 * h;
                    let down = md.apply(&p).unwrap();
                    let fd: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
                    let diff: Vec<f64> = fd.iter().zip(jac.column(c).iter()).map(|(a, b)| a - b).collect();
                    prop_assert!(norm2(&diff) / norm2(&fd) < 1e-6);
                }
            }
        }
    }
}
