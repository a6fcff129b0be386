//! Analysis-prior recovery: nonlinear greedy analysis pursuit.
//!
//! The estimate starts dense, with every analysis row in the cosupport `Λ`.
//! Each iteration drops the row of `Ω` with the largest response `|Ωx|`
//! from `Λ` and re-solves `min ‖Ω_Λ x‖² s.t. y = f(x)`.

use crate::error::{Error, Result};
use crate::greedy::argmax_excluding;
use crate::linalg::{norm2, LinearOperator};
use crate::model::{MeasurementModel, ScalarMap};
use crate::nlls::{penalty_constrained_fit, PenaltyOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct GapOptions {
    /// Rows removed from the cosupport in total.
    pub prune_count: usize,
    /// Rows removed per iteration, largest responses first. 1 gives the
    /// textbook algorithm.
    pub rows_per_iter: usize,
    pub penalty: PenaltyOptions,
}

impl GapOptions {
    pub fn new(prune_count: usize) -> Self {
        Self {
            prune_count,
            rows_per_iter: 1,
            penalty: PenaltyOptions::default(),
        }
    }
}

/// State after one constrained solve. `removed` holds the rows pruned just
/// before it, and is empty for the initial solve on the full cosupport.
#[derive(Debug, Clone, PartialEq)]
pub struct GapIterate<'a> {
    pub removed: &'a [usize],
    pub x: &'a [f64],
    pub cosupport: &'a [bool],
    /// `‖Ω_Λ x‖₂` on the current `Λ` before the re-solve (previous `x`).
    pub energy_before: f64,
    /// `‖Ω_Λ x‖₂` after the re-solve.
    pub energy_after: f64,
    pub constraint_residual: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSolution {
    pub x: Vec<f64>,
    pub cosupport: Vec<bool>,
    /// Pruned rows in removal order.
    pub removed: Vec<usize>,
    pub constraint_residual: f64,
    /// Every constrained solve met the penalty tolerance.
    pub feasible: bool,
}

/// `‖Ω_Λ x‖₂`
pub fn analysis_energy<O: LinearOperator>(op: &O, cosupport: &[bool], x: &[f64]) -> f64 {
    let mut out = vec![0.0; op.nrows()];
    op.apply(x, &mut out);
    out.iter()
        .zip(cosupport)
        .filter(|(_, &keep)| keep)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Up to `count` rows still in the cosupport, by decreasing `|response|`
/// with ties going to the smaller index.
fn largest_responses(response: &[f64], cosupport: &[bool], count: usize) -> Vec<usize> {
    if count == 1 {
        let excluded: Vec<bool> = cosupport.iter().map(|k| !k).collect();
        let abs: Vec<f64> = response.iter().map(|v| v.abs()).collect();
        return argmax_excluding(&abs, &excluded).into_iter().collect();
    }
    let mut rows: Vec<usize> = (0..response.len()).filter(|&i| cosupport[i]).collect();
    rows.sort_by(|&a, &b| response[b].abs().total_cmp(&response[a].abs()).then(a.cmp(&b)));
    rows.truncate(count);
    rows
}

pub fn nl_gap<O, A, G>(op: &O, model: &MeasurementModel<A, G>, y: &[f64], opts: &GapOptions) -> Result<GapSolution>
where
    O: LinearOperator,
    A: LinearOperator,
    G: ScalarMap,
{
    nl_gap_observed(op, model, y, opts, |_| {})
}

/// [`nl_gap`] with a callback invoked after every constrained solve.
pub fn nl_gap_observed<O, A, G, F>(
    op: &O,
    model: &MeasurementModel<A, G>,
    y: &[f64],
    opts: &GapOptions,
    mut observe: F,
) -> Result<GapSolution>
where
    O: LinearOperator,
    A: LinearOperator,
    G: ScalarMap,
    F: FnMut(&GapIterate<'_>),
{
    let p = op.nrows();
    if p == 0 || opts.prune_count >= p {
        return Err(Error::InvalidOption(format!(
            "GAP needs prune_count < p, got {} with p = {p}",
            opts.prune_count
        )));
    }
    if opts.rows_per_iter == 0 {
        return Err(Error::InvalidOption("rows_per_iter must be at least 1".into()));
    }
    let mut cosupport = vec![true; p];
    let start = vec![0.0; model.n()];
    let fit = penalty_constrained_fit(op, &cosupport, model, y, &start, &opts.penalty)?;
    let mut x = fit.x;
    let mut feasible = fit.feasible;
    let mut constraint_residual = fit.constraint_history.last().copied().unwrap_or(f64::NAN);
    let energy = analysis_energy(op, &cosupport, &x);
    observe(&GapIterate {
        removed: &[],
        x: &x,
        cosupport: &cosupport,
        energy_before: analysis_energy(op, &cosupport, &start),
        energy_after: energy,
        constraint_residual,
        feasible: fit.feasible,
    });

    let mut removed = Vec::with_capacity(opts.prune_count);
    let mut response = vec![0.0; p];
    while removed.len() < opts.prune_count {
        op.apply(&x, &mut response);
        let batch = largest_responses(
            &response,
            &cosupport,
            opts.rows_per_iter.min(opts.prune_count - removed.len()),
        );
        if batch.is_empty() {
            break;
        }
        for &i in &batch {
            cosupport[i] = false;
        }
        removed.extend_from_slice(&batch);
        let energy_before = analysis_energy(op, &cosupport, &x);
        let fit = penalty_constrained_fit(op, &cosupport, model, y, &x, &opts.penalty)?;
        x = fit.x;
        feasible &= fit.feasible;
        constraint_residual = fit.constraint_history.last().copied().unwrap_or(f64::NAN);
        observe(&GapIterate {
            removed: &batch,
            x: &x,
            cosupport: &cosupport,
            energy_before,
            energy_after: analysis_energy(op, &cosupport, &x),
            constraint_residual,
            feasible: fit.feasible,
        });
    }
    debug_assert!(norm2(&x).is_finite());
    Ok(GapSolution {
        x,
        cosupport,
        removed,
        constraint_residual,
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nonlinearity;
    use crate::transforms::tv::FirstDifference;
    use nalgebra::DMatrix;

    #[test]
    fn square_invertible_model_ignores_the_prior() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 3.0]);
        let x_true = [0.5, -1.0, 2.0];
        let md = MeasurementModel::new(a, Nonlinearity::Identity).unwrap();
        let y = md.apply(&x_true).unwrap();
        let op = FirstDifference::new(3);
        let mut seen = 0;
        let sol = nl_gap_observed(&op, &md, &y, &GapOptions::new(1), |it| {
            seen += 1;
            for (a, b) in it.x.iter().zip(&x_true) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        })
        .unwrap();
        assert_eq!(seen, 2);
        assert_eq!(sol.removed.len(), 1);
        assert!(sol.feasible);
    }

    #[test]
    fn cosupport_shrinks_one_row_at_a_time() {
        let a = DMatrix::from_fn(4, 6, |i, j| ((i * 6 + j) as f64 * 0.71).cos());
        let md = MeasurementModel::new(a, Nonlinearity::Identity).unwrap();
        let x_true = [1.0, 1.0, 1.0, -0.5, -0.5, -0.5];
        let y = md.apply(&x_true).unwrap();
        let op = FirstDifference::new(6);
        let mut sizes = Vec::new();
        let sol = nl_gap_observed(&op, &md, &y, &GapOptions::new(3), |it| {
            sizes.push(it.cosupport.iter().filter(|&&k| k).count());
            if !it.removed.is_empty() {
                assert!(it.energy_after <= it.energy_before + 1e-10);
            }
        })
        .unwrap();
        assert_eq!(sizes, vec![5, 4, 3, 2]);
        let mut r = sol.removed.clone();
        r.dedup();
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn rejects_prune_count_at_or_above_rows() {
        let md = MeasurementModel::new(DMatrix::identity(3, 3), Nonlinearity::Identity).unwrap();
        let op = FirstDifference::new(3);
        assert!(nl_gap(&op, &md, &[1.0, 2.0, 3.0], &GapOptions::new(2)).is_err());
    }
}
