//! Synthesis-prior greedy solvers.
//!
//! Both solvers score atoms by the magnitude of the gradient of
//! `‖y − f(x)‖²` and refit the active coordinates by Levenberg–Marquardt.
//! For `f(x) = Ax` the score is `2|Aᵀ(y − Ax)|`, so the classical selection
//! rules are recovered exactly.

use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::model::{MeasurementModel, ScalarMap};
use crate::nlls::{lm_fit, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    SparsityReached,
    ResidualTol,
    MaxIters,
    SupportStable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub x: Vec<f64>,
    /// For OMP, in selection order; for CoSaMP, ascending.
    pub support: Vec<usize>,
    pub iterations: usize,
    /// `‖y − f(x)‖₂` recomputed at return.
    pub final_residual_norm: f64,
    pub converged_by: StopReason,
    /// Residual norm after each iteration.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOptions {
    /// Target sparsity.
    pub k: usize,
    pub residual_tol: f64,
    /// CoSaMP iteration cap.
    pub max_iters: usize,
    /// Atoms OMP adds per iteration, highest scores first. 1 gives the
    /// textbook algorithm.
    pub atoms_per_iter: usize,
    pub lm: LmOptions,
}

impl GreedyOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            residual_tol: 1e-8,
            max_iters: 50,
            atoms_per_iter: 1,
            lm: LmOptions::default(),
        }
    }
}

/// Index of the largest score among those not excluded; smallest index on
/// ties.
pub(crate) fn argmax_excluding(scores: &[f64], excluded: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&s, &skip)) in scores.iter().zip(excluded).enumerate() {
        if skip {
            continue;
        }
        match best {
            Some((_, b)) if !(s > b) => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Indices of the `count` largest scores, ties broken toward smaller
/// indices. Returned in ascending index order.
pub(crate) fn top_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

fn abs_scores<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    Ok(model.residual_gradient(x, y)?.into_iter().map(f64::abs).collect())
}

/// Nonlinear orthogonal matching pursuit.
///
/// Each iteration adds the coordinate with the largest absolute gradient of
/// the squared residual (or the `atoms_per_iter` largest) and refits all
/// selected coordinates, warm-started from the previous estimate. Stops after `k` selections, or earlier once
/// the residual drops to `residual_tol`.
pub fn nl_omp<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    y: &[f64],
    opts: &GreedyOptions,
) -> Result<SparseSolution> {
    let n = model.n();
    if opts.k == 0 || opts.k > n {
        return Err(Error::InvalidOption(format!(
            "OMP needs 1 <= k <= n, got k = {}",
            opts.k
        )));
    }
    if opts.atoms_per_iter == 0 {
        return Err(Error::InvalidOption("atoms_per_iter must be at least 1".into()));
    }
    let mut x = vec![0.0; n];
    let mut support = Vec::with_capacity(opts.k);
    let mut selected = vec![false; n];
    let mut residual = model.residual_norm(&x, y)?;
    let mut history = Vec::with_capacity(opts.k);
    let mut converged_by = StopReason::SparsityReached;
    while support.len() < opts.k {
        if residual <= opts.residual_tol {
            converged_by = StopReason::ResidualTol;
            break;
        }
        let mut scores = abs_scores(model, &x, y)?;
        let batch = opts.atoms_per_iter.min(opts.k - support.len());
        let before = support.len();
        for _ in 0..batch {
            let Some(i) = argmax_excluding(&scores, &selected) else {
                break;
            };
            selected[i] = true;
            support.push(i);
            scores[i] = f64::NEG_INFINITY;
        }
        if support.len() == before {
            break;
        }
        x = lm_fit(model, y, &support, &x, &opts.lm)?.x;
        residual = model.residual_norm(&x, y)?;
        history.push(residual);
    }
    if converged_by == StopReason::SparsityReached && residual <= opts.residual_tol {
        converged_by = StopReason::ResidualTol;
    }
    Ok(SparseSolution {
        iterations: history.len(),
        final_residual_norm: residual,
        x,
        support,
        converged_by,
        residual_history: history,
    })
}

/// Nonlinear CoSaMP.
///
/// Each iteration merges the `2k` highest-scoring coordinates into the
/// current support, refits on the merged set, and keeps the `k` entries of
/// largest magnitude. Halts when the residual reaches `residual_tol`, when
/// the pruned support repeats, or after `max_iters` iterations.
pub fn nl_cosamp<A: LinearOperator, G: ScalarMap>(
    model: &MeasurementModel<A, G>,
    y: &[f64],
    opts: &GreedyOptions,
) -> Result<SparseSolution> {
    let n = model.n();
    if opts.k == 0 || 2 * opts.k > n {
        return Err(Error::InvalidOption(format!(
            "CoSaMP needs 1 <= k and 2k <= n, got k = {} with n = {n}",
            opts.k
        )));
    }
    let mut x = vec![0.0; n];
    let mut support: Vec<usize> = Vec::new();
    let mut residual = model.residual_norm(&x, y)?;
    let mut history = Vec::new();
    let mut converged_by = StopReason::MaxIters;
    for _ in 0..opts.max_iters {
        if residual <= opts.residual_tol {
            converged_by = StopReason::ResidualTol;
            break;
        }
        let scores = abs_scores(model, &x, y)?;
        let mut merged = top_indices(&scores, 2 * opts.k);
        merged.extend_from_slice(&support);
        merged.sort_unstable();
        merged.dedup();

        let b = lm_fit(model, y, &merged, &x, &opts.lm)?.x;
        let magnitudes: Vec<f64> = merged.iter().map(|&j| b[j].abs()).collect();
        let keep: Vec<usize> = top_indices(&magnitudes, opts.k)
            .into_iter()
            .map(|pos| merged[pos])
            .filter(|&j| b[j] != 0.0)
            .collect();

        x = vec![0.0; n];
        for &j in &keep {
            x[j] = b[j];
        }
        residual = model.residual_norm(&x, y)?;
        history.push(residual);
        let stable = keep == support;
        support = keep;
        if stable {
            converged_by = StopReason::SupportStable;
            break;
        }
    }
    if residual <= opts.residual_tol {
        converged_by = StopReason::ResidualTol;
    }
    Ok(SparseSolution {
        iterations: history.len(),
        final_residual_norm: residual,
        x,
        support,
        converged_by,
        residual_history: history,
    })
}
