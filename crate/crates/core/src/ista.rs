//! Nonlinear iterative soft thresholding, the l1 baseline the greedy
//! solvers are compared against.

use crate::error::{check_len, Error, Result};
use crate::linalg::{norm_inf, operator_norm_sq, LinearOperator};
use crate::model::{MeasurementModel, ScalarMap};

#[derive(Debug, Clone, PartialEq)]
pub struct IstaOptions {
    /// Gradient step. `None` selects `0.5 / (‖A‖² · max g'(Ax)²)`, refreshed
    /// along the iterate path and shrunk whenever the residual grows.
    pub step_sigma: Option<f64>,
    pub threshold_tau: f64,
    pub max_iters: usize,
    pub x_tol: f64,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for IstaOptions {
    fn default() -> Self {
        Self {
            step_sigma: None,
            threshold_tau: 0.0,
            max_iters: 2000,
            x_tol: 1e-10,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Step used on the final iteration.
    pub step: f64,
    pub converged: bool,
}

/// Consecutive increases of the objective `‖y − f(x)‖² + (τ/σ)‖x‖₁`
/// tolerated before giving up. With `τ = 0` this is the residual itself.
const DIVERGENCE_WINDOW: usize = 10;
const STEP_REFRESH: usize = 50;
const POWER_ITERS: usize = 200;

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

fn adaptive_step<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    norm_sq: f64,
    x: &[f64],
) -> Result<f64> {
    let u = model.pre_activation(x)?;
    let g = model.nonlinearity();
    let gmax = u.iter().fold(0.0f64, |m, &t| m.max(g.derivative(t).abs()));
    let lip = norm_sq * gmax * gmax;
    if !(lip > 0.0) || !lip.is_finite() {
        return Err(Error::InvalidOption(
            "cannot derive an ISTA step from a zero operator".into(),
        ));
    }
    Ok(0.5 / lip)
}

/// Alternates a gradient step on `‖y − f(x)‖²` with soft thresholding at
/// `τ` until successive iterates agree to `x_tol` in the ∞-norm.
pub fn nl_ista<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    y: &[f64],
    opts: &IstaOptions,
) -> Result<IstaSolution> {
    check_len("observations", model.m(), y.len())?;
    if !(opts.threshold_tau >= 0.0) || opts.step_sigma.is_some_and(|s| !(s > 0.0)) {
        return Err(Error::InvalidOption("ISTA needs step > 0 and tau >= 0".into()));
    }
    let mut x = match &opts.x0 {
        Some(x0) => {
            check_len("initial point", model.n(), x0.len())?;
            x0.clone()
        }
        None => vec![0.0; model.n()],
    };
    let norm_sq = match opts.step_sigma {
        Some(_) => 0.0,
        None => operator_norm_sq(model.op(), POWER_ITERS),
    };
    let mut step = match opts.step_sigma {
        Some(s) => s,
        None => adaptive_step(model, norm_sq, &x)?,
    };
    let objective = |x: &[f64], step: f64| -> Result<f64> {
        let r = model.residual_norm(x, y)?;
        let l1 = if opts.threshold_tau > 0.0 {
            opts.threshold_tau / step * x.iter().map(|v| v.abs()).sum::<f64>()
        } else {
            0.0
        };
        Ok(r * r + l1)
    };
    let mut current = objective(&x, step)?;
    let mut growth = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        if opts.step_sigma.is_none() && iterations > 0 && iterations % STEP_REFRESH == 0 {
            step = adaptive_step(model, norm_sq, &x)?;
            current = objective(&x, step)?;
            growth = 0;
        }
        let grad = model.residual_gradient(&x, y)?;
        let next: Vec<f64> = x
            .iter()
            .zip(&grad)
            .map(|(xi, gi)| soft_threshold(xi - step * gi, opts.threshold_tau))
            .collect();
        let change = norm_inf(&x.iter().zip(&next).map(|(a, b)| a - b).collect::<Vec<_>>());
        x = next;
        iterations += 1;
        let mut value = objective(&x, step)?;
        if value > current {
            growth += 1;
            if growth >= DIVERGENCE_WINDOW {
                return Err(Error::Divergence(growth));
            }
            if opts.step_sigma.is_none() {
                step = adaptive_step(model, norm_sq, &x)?.min(0.5 * step);
                value = objective(&x, step)?;
            }
        } else {
            growth = 0;
        }
        current = value;
        if change <= opts.x_tol {
            converged = true;
            break;
        }
    }
    Ok(IstaSolution {
        x,
        iterations,
        step,
        converged,
    })
}
