//! Nonlinear least squares.
//!
//! [`lm_fit`] is the support-restricted Levenberg–Marquardt refit used by
//! the synthesis solvers after every atom selection. [`penalty_constrained_fit`]
//! solves `min ‖Ω_Λ x‖² s.t. y = f(x)` for the analysis solver by driving the
//! stacked residual `[Ω_Λ x ; √β (f(x) − y)]` to a minimum with LM and
//! escalating `β` until the constraint holds.
//!
//! Both share one LM engine that either factors the damped normal matrix
//! (dense operators) or solves it with conjugate gradients (structured
//! operators such as the wavelet synthesis or finite differences).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{conjugate_gradient, norm2, norm_inf, to_dense, LinearOperator};
use crate::model::{check_support, MeasurementModel, ScalarMap};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    /// Budget of trial steps (accepted and rejected).
    pub max_iters: usize,
    /// Stop once the ∞-norm of the cost gradient falls below this.
    pub grad_tol: f64,
    /// Stop once a step is shorter than `step_tol · (1 + ‖x‖)`.
    pub step_tol: f64,
    /// Stop once an accepted step lowers the cost by less than this
    /// fraction. Zero disables the test.
    pub cost_rel_tol: f64,
    pub damping_init: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Conjugate-gradient budget per step for matrix-free systems.
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    /// Implicit operators are materialized when the unknown count is at
    /// most this.
    pub dense_limit: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            cost_rel_tol: 0.0,
            damping_init: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            cg_max_iters: 200,
            cg_tol: 1e-10,
            dense_limit: 256,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.grad_tol,
            self.step_tol,
            self.damping_init,
            self.damping_up,
            self.damping_down,
            self.cg_tol,
        ];
        if self.max_iters == 0 || positive.iter().any(|v| !(*v > 0.0)) || !(self.cost_rel_tol >= 0.0) {
            return Err(Error::InvalidOption("LM options must be positive".into()));
        }
        if !(self.damping_up > 1.0 && self.damping_down < 1.0) {
            return Err(Error::InvalidOption(
                "LM damping requires damping_up > 1 > damping_down > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStop {
    GradientTol,
    StepTol,
    /// An accepted step barely lowered the cost.
    CostTol,
    MaxIters,
    /// Damping grew past any useful value without finding a descent step.
    DampingLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    /// Trial steps taken, accepted or not.
    pub iterations: usize,
    pub stop: LmStop,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub grad_inf_norm: f64,
    /// More unknowns than residual rows.
    pub underdetermined: bool,
    /// `‖r‖²` after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    /// Full-length estimate, zero off the fitted support.
    pub x: Vec<f64>,
    pub report: LmReport,
}

const MAX_DAMPING: f64 = 1e30;

type MatVec<'a> = Box<dyn Fn(&[f64], &mut [f64]) + 'a>;

pub(crate) enum NormalSystem<'a> {
    /// `JᵀJ`
    Dense(DMatrix<f64>),
    /// `v ↦ JᵀJ v`
    Implicit(MatVec<'a>),
}

pub(crate) struct Linearization<'a> {
    pub residuals: Vec<f64>,
    pub jt_r: Vec<f64>,
    pub system: NormalSystem<'a>,
}

pub(crate) trait LeastSquares {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&self, p: &[f64]) -> Result<Linearization<'_>>;
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn solve_damped(lin: &Linearization<'_>, mu: f64, opts: &LmOptions) -> Option<Vec<f64>> {
    let rhs: Vec<f64> = lin.jt_r.iter().map(|v| -v).collect();
    match &lin.system {
        NormalSystem::Dense(jtj) => {
            let mut m = jtj.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += mu;
            }
            let chol = m.cholesky()?;
            let step = chol.solve(&DVector::from_vec(rhs));
            step.iter().all(|v| v.is_finite()).then(|| step.as_slice().to_vec())
        }
        NormalSystem::Implicit(normal) => {
            let mut step = vec![0.0; rhs.len()];
            conjugate_gradient(
                |v, out| {
                    normal(v, out);
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += mu * vi;
                    }
                },
                &rhs,
                &mut step,
                opts.cg_tol,
                opts.cg_max_iters,
            );
            step.iter().all(|v| v.is_finite()).then_some(step)
        }
    }
}

/// Levenberg–Marquardt on a generic least-squares problem.
pub(crate) fn levenberg_marquardt<P: LeastSquares>(
    problem: &P,
    start: Vec<f64>,
    opts: &LmOptions,
) -> Result<(Vec<f64>, LmReport)> {
    opts.validate()?;
    let mut p = start;
    let mut lin = problem.linearize(&p)?;
    let mut cost = sq(&lin.residuals);
    let initial_cost = cost;
    let mut accepted_costs = vec![cost];
    let mut mu = opts.damping_init;
    let mut iterations = 0;
    let stop = loop {
        let grad_inf = 2.0 * norm_inf(&lin.jt_r);
        if grad_inf <= opts.grad_tol {
            break LmStop::GradientTol;
        }
        if iterations >= opts.max_iters {
            break LmStop::MaxIters;
        }
        iterations += 1;
        let step = match solve_damped(&lin, mu, opts) {
            Some(step) => step,
            None => {
                mu *= opts.damping_up;
                if mu > MAX_DAMPING {
                    break LmStop::DampingLimit;
                }
                continue;
            }
        };
        if norm2(&step) <= opts.step_tol * (1.0 + norm2(&p)) {
            break LmStop::StepTol;
        }
        let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
        let trial_cost = match problem.residuals(&trial) {
            Ok(r) => Some(sq(&r)).filter(|c| c.is_finite()),
            Err(Error::NonFinite { .. } | Error::Overflow { .. }) => None,
            Err(e) => return Err(e),
        };
        match trial_cost {
            Some(c) if c <= cost => {
                p = trial;
                lin = problem.linearize(&p)?;
                let previous = cost;
                cost = sq(&lin.residuals);
                accepted_costs.push(cost);
                mu = (mu * opts.damping_down).max(1e-300);
                if opts.cost_rel_tol > 0.0 && previous - cost <= opts.cost_rel_tol * previous {
                    break LmStop::CostTol;
                }
            }
            _ => {
                mu *= opts.damping_up;
                if mu > MAX_DAMPING {
                    break LmStop::DampingLimit;
                }
            }
        }
    };
    let report = LmReport {
        iterations,
        stop,
        initial_cost,
        final_cost: cost,
        grad_inf_norm: 2.0 * norm_inf(&lin.jt_r),
        underdetermined: problem.num_params() > problem.num_residuals(),
        accepted_costs,
    };
    Ok((p, report))
}

/// `‖y − f(x)‖²` over the coordinates in a support, all others held at zero.
struct SupportProblem<'a, A, G> {
    model: &'a MeasurementModel<A, G>,
    y: &'a [f64],
    support: &'a [usize],
    /// `A_S`, when the operator is dense.
    columns: Option<DMatrix<f64>>,
}

impl<A: LinearOperator, G: ScalarMap> SupportProblem<'_, A, G> {
    fn scatter(&self, p: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.model.n()];
        for (&j, &v) in self.support.iter().zip(p) {
            x[j] = v;
        }
        x
    }
}

fn finite_or(context: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(row) => Err(Error::NonFinite { context, row }),
        None => Ok(()),
    }
}

impl<A: LinearOperator, G: ScalarMap> LeastSquares for SupportProblem<'_, A, G> {
    fn num_params(&self) -> usize {
        self.support.len()
    }

    fn num_residuals(&self) -> usize {
        self.model.m()
    }

    fn residuals(&self, p: &[f64]) -> Result<Vec<f64>> {
        let fx = self.model.apply(&self.scatter(p))?;
        Ok(fx.iter().zip(self.y).map(|(a, b)| a - b).collect())
    }

    fn linearize(&self, p: &[f64]) -> Result<Linearization<'_>> {
        let u = self.model.pre_activation(&self.scatter(p))?;
        let g = self.model.nonlinearity();
        let gp: Vec<f64> = u.iter().map(|&t| g.derivative(t)).collect();
        let residuals: Vec<f64> = u.iter().zip(self.y).map(|(&t, yi)| g.value(t) - yi).collect();
        finite_or("residual", &residuals)?;
        finite_or("jacobian", &gp)?;
        if let Some(cols) = &self.columns {
            let mut jac = cols.clone();
            for (i, d) in gp.iter().enumerate() {
                jac.row_mut(i).scale_mut(*d);
            }
            let jt_r = (jac.transpose() * DVector::from_column_slice(&residuals))
                .as_slice()
                .to_vec();
            let jtj = jac.transpose() * &jac;
            return Ok(Linearization {
                residuals,
                jt_r,
                system: NormalSystem::Dense(jtj),
            });
        }
        let n = self.model.n();
        let op = self.model.op();
        let weighted: Vec<f64> = gp.iter().zip(&residuals).map(|(d, r)| d * r).collect();
        let mut full = vec![0.0; n];
        op.apply_adjoint(&weighted, &mut full);
        let jt_r = self.support.iter().map(|&j| full[j]).collect();
        let gp2: Vec<f64> = gp.iter().map(|d| d * d).collect();
        let support = self.support;
        let m = self.model.m();
        let normal = move |v: &[f64], out: &mut [f64]| {
            let mut x = vec![0.0; n];
            for (&j, &vj) in support.iter().zip(v) {
                x[j] = vj;
            }
            let mut ax = vec![0.0; m];
            op.apply(&x, &mut ax);
            for (a, w) in ax.iter_mut().zip(&gp2) {
                *a *= w;
            }
            op.apply_adjoint(&ax, &mut x);
            for (o, &j) in out.iter_mut().zip(support) {
                *o = x[j];
            }
        };
        Ok(Linearization {
            residuals,
            jt_r,
            system: NormalSystem::Implicit(Box::new(normal)),
        })
    }
}

/// Fits `min ‖y − f(x)‖²` over the coordinates in `support`, starting from
/// `x0` (which must vanish off the support).
pub fn lm_fit<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    y: &[f64],
    support: &[usize],
    x0: &[f64],
    opts: &LmOptions,
) -> Result<LmFit> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    check_support(support, model.n())?;
    check_len("observations", model.m(), y.len())?;
    check_len("initial point", model.n(), x0.len())?;
    let mut on_support = vec![false; model.n()];
    support.iter().for_each(|&j| on_support[j] = true);
    if let Some(j) = (0..model.n()).find(|&j| !on_support[j] && x0[j] != 0.0) {
        return Err(Error::InvalidOption(format!(
            "initial point is nonzero at index {j} outside the support"
        )));
    }
    let columns = model.op().as_dense().map(|a| a.select_columns(support));
    let problem = SupportProblem {
        model,
        y,
        support,
        columns,
    };
    let start = support.iter().map(|&j| x0[j]).collect();
    let (p, report) = levenberg_marquardt(&problem, start, opts)?;
    Ok(LmFit {
        x: problem.scatter(&p),
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOptions {
    pub beta_init: f64,
    pub beta_growth: f64,
    pub constraint_tol: f64,
    /// Number of penalty stages; `1` holds `β` fixed at `beta_init`.
    pub max_outer: usize,
    pub inner: LmOptions,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            beta_init: 1.0,
            beta_growth: 10.0,
            constraint_tol: 1e-8,
            max_outer: 12,
            inner: LmOptions::default(),
        }
    }
}

impl PenaltyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_init > 0.0) || !(self.beta_growth > 1.0) || !(self.constraint_tol > 0.0) {
            return Err(Error::InvalidOption(
                "penalty requires beta_init > 0, beta_growth > 1, constraint_tol > 0".into(),
            ));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidOption("max_outer must be at least 1".into()));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyFit {
    pub x: Vec<f64>,
    /// Penalty weight of the last stage.
    pub beta: f64,
    /// `‖y − f(x)‖₂` after each stage.
    pub constraint_history: Vec<f64>,
    /// The final constraint residual met `constraint_tol`.
    pub feasible: bool,
    pub inner_iterations: usize,
}

impl PenaltyFit {
    pub fn constraint_residual(&self) -> f64 {
        *self.constraint_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Stacked residual `[Ω_Λ x ; √β (g(Ax) − y)]`.
struct PenaltyProblem<'a, O, A, G> {
    rows: &'a O,
    cosupport: &'a [bool],
    model: &'a MeasurementModel<A, G>,
    y: &'a [f64],
    beta: f64,
    /// Dense `Ω_Λ` (masked rows zeroed) and `A`, when both are small enough.
    dense: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl<O: LinearOperator, A: LinearOperator, G: ScalarMap> PenaltyProblem<'_, O, A, G> {
    fn masked_analysis(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.nrows()];
        self.rows.apply(x, &mut out);
        for (o, &keep) in out.iter_mut().zip(self.cosupport) {
            if !keep {
                *o = 0.0;
            }
        }
        out
    }
}

impl<O: LinearOperator, A: LinearOperator, G: ScalarMap> LeastSquares for PenaltyProblem<'_, O, A, G> {
    fn num_params(&self) -> usize {
        self.model.n()
    }

    fn num_residuals(&self) -> usize {
        self.cosupport.iter().filter(|&&k| k).count() + self.model.m()
    }

    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.masked_analysis(x);
        let fx = self.model.apply(x)?;
        let sb = self.beta.sqrt();
        r.extend(fx.iter().zip(self.y).map(|(a, b)| sb * (a - b)));
        Ok(r)
    }

    fn linearize(&self, x: &[f64]) -> Result<Linearization<'_>> {
        let u = self.model.pre_activation(x)?;
        let g = self.model.nonlinearity();
        let gp: Vec<f64> = u.iter().map(|&t| g.derivative(t)).collect();
        let data: Vec<f64> = u.iter().zip(self.y).map(|(&t, yi)| g.value(t) - yi).collect();
        finite_or("residual", &data)?;
        finite_or("jacobian", &gp)?;
        let analysis = self.masked_analysis(x);
        let beta = self.beta;
        let sb = beta.sqrt();
        let mut residuals = analysis.clone();
        residuals.extend(data.iter().map(|d| sb * d));
        let n = self.model.n();

        // Jᵀr = Ω_Λᵀ(Ω_Λ x) + β Aᵀ(g' ⊙ (g − y))
        let weighted: Vec<f64> = gp.iter().zip(&data).map(|(d, r)| beta * d * r).collect();
        let mut jt_r = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.rows.apply_adjoint(&analysis, &mut jt_r);
        self.model.op().apply_adjoint(&weighted, &mut tmp);
        jt_r.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);

        if let Some((omega, a)) = &self.dense {
            let mut da = a.clone();
            for (i, d) in gp.iter().enumerate() {
                da.row_mut(i).scale_mut(*d);
            }
            let jtj = omega.transpose() * omega + (da.transpose() * &da) * beta;
            return Ok(Linearization {
                residuals,
                jt_r,
                system: NormalSystem::Dense(jtj),
            });
        }

        let gp2b: Vec<f64> = gp.iter().map(|d| beta * d * d).collect();
        let rows = self.rows;
        let cosupport = self.cosupport;
        let op = self.model.op();
        let (p, m) = (rows.nrows(), self.model.m());
        let normal = move |v: &[f64], out: &mut [f64]| {
            let mut ov = vec![0.0; p];
            rows.apply(v, &mut ov);
            for (o, &keep) in ov.iter_mut().zip(cosupport) {
                if !keep {
                    *o = 0.0;
                }
            }
            rows.apply_adjoint(&ov, out);
            let mut av = vec![0.0; m];
            op.apply(v, &mut av);
            for (a, w) in av.iter_mut().zip(&gp2b) {
                *a *= w;
            }
            let mut back = vec![0.0; v.len()];
            op.apply_adjoint(&av, &mut back);
            out.iter_mut().zip(&back).for_each(|(o, b)| *o += b);
        };
        Ok(Linearization {
            residuals,
            jt_r,
            system: NormalSystem::Implicit(Box::new(normal)),
        })
    }
}

/// Approximately solves `min ‖Ω_Λ x‖² s.t. y = f(x)`, where `Ω_Λ` is the set
/// of rows of `rows` flagged in `cosupport`.
///
/// Each stage minimizes `‖Ω_Λ x‖² + β‖y − f(x)‖²` with LM, warm-started from
/// the previous stage, and then multiplies `β` by `beta_growth`. An empty
/// cosupport reduces to a pure feasibility problem.
pub fn penalty_constrained_fit<O, A, G>(
    rows: &O,
    cosupport: &[bool],
    model: &MeasurementModel<A, G>,
    y: &[f64],
    x0: &[f64],
    opts: &PenaltyOptions,
) -> Result<PenaltyFit>
where
    O: LinearOperator,
    A: LinearOperator,
    G: ScalarMap,
{
    opts.validate()?;
    check_len("analysis operator columns", model.n(), rows.ncols())?;
    check_len("cosupport", rows.nrows(), cosupport.len())?;
    check_len("observations", model.m(), y.len())?;
    check_len("initial point", model.n(), x0.len())?;

    let both_dense = rows.as_dense().is_some() && model.op().as_dense().is_some();
    let dense = (model.n() <= opts.inner.dense_limit || (both_dense && model.n() <= 2048)).then(|| {
        let mut omega = to_dense(rows);
        for (i, &keep) in cosupport.iter().enumerate() {
            if !keep {
                omega.row_mut(i).fill(0.0);
            }
        }
        (omega, to_dense(model.op()))
    });

    let mut problem = PenaltyProblem {
        rows,
        cosupport,
        model,
        y,
        beta: opts.beta_init,
        dense,
    };
    let mut x = x0.to_vec();
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_outer);
    let mut inner_iterations = 0;
    let mut feasible = false;
    for stage in 0..opts.max_outer {
        if stage > 0 {
            problem.beta *= opts.beta_growth;
        }
        let (next, report) = levenberg_marquardt(&problem, x, &opts.inner)?;
        x = next;
        inner_iterations += report.iterations;
        let c = model.residual_norm(&x, y)?;
        history.push(c);
        if c <= opts.constraint_tol {
            feasible = true;
            break;
        }
        if let [.., a, b, c] = history[..] {
            if b >= a && c >= b {
                return Err(Error::Stalled { residual: c });
            }
        }
    }
    Ok(PenaltyFit {
        x,
        beta: problem.beta,
        constraint_history: history,
        feasible,
        inner_iterations,
    })
}
