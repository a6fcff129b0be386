mod common;

use common::*;
use nlsparse::bench::{self, Ensemble, SolverKind, TrialConfig};
use nlsparse::Nonlinearity;

fn cfg(nonlinearity: Nonlinearity, k: usize, trials: usize, seed: u64) -> TrialConfig {
    TrialConfig {
        nonlinearity,
        k,
        trials,
        seed,
        ..TrialConfig::default()
    }
}

/// Success rate of textbook OMP on the same trials the harness generates.
fn reference_rate(c: &TrialConfig) -> f64 {
    let r = bench::run_phase_with(c, |cfg, t| {
        let support = linear_omp(t.model.op(), &t.y, cfg.k, 1e-10);
        Ok(lstsq(t.model.op(), &support, &t.y))
    })
    .unwrap();
    r.success_rate
}

fn at_most_one_small_inversion(rates: &[f64], increasing: bool) -> bool {
    let inv: Vec<f64> = rates
        .windows(2)
        .map(|w| if increasing { w[0] - w[1] } else { w[1] - w[0] })
        .filter(|d| *d > 0.0)
        .collect();
    inv.len() <= 1 && inv.iter().all(|d| *d <= 0.05)
}

#[test]
fn nmse_examples() {
    assert_eq!(bench::nmse(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
    assert_eq!(bench::nmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert!((bench::nmse(&[3.0, 4.0], &[3.0, 0.0]).unwrap() - 0.8).abs() < 1e-15);
    assert!(bench::nmse(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    assert!(bench::nmse(&[1.0], &[1.0, 0.0]).is_err());
}

#[test]
fn linear_omp_phase_point() {
    let c = cfg(Nonlinearity::Identity, 4, 100, 3);
    let ours = bench::run_phase(&c).unwrap();
    assert!(reference_rate(&c) >= 0.95);
    assert!(ours.success_rate >= 0.95, "{}", ours.success_rate);
    assert_eq!(ours.success_rate, ours.successes as f64 / 100.0);
}

#[test]
fn exp_single_atom_phase_point() {
    let c = cfg(Nonlinearity::Exp, 1, 100, 4);
    let ours = bench::run_phase(&c).unwrap();
    assert!(ours.success_rate >= 0.98, "{}", ours.success_rate);
    // the exhaustive fit finds the true atom in every trial we spot-check
    for i in 0..10 {
        let t = bench::gen_trial(&c, i).unwrap();
        let (j, _, _) = best_single_exp_support(t.model.op(), &t.y);
        assert!(t.x_true[j] != 0.0, "trial {i}");
    }
}

#[test]
fn sparsity_and_measurement_trends() {
    let base = cfg(Nonlinearity::Identity, 4, 100, 8);
    let by_k = bench::sweep(&base, &[2, 4, 6, 8], &[40]);
    let by_m = bench::sweep(&base, &[4], &[20, 40, 60, 80]);
    let rates = |cells: &[nlsparse::Result<bench::PhaseResult>]| -> Vec<f64> {
        cells.iter().map(|c| c.as_ref().unwrap().success_rate).collect()
    };
    let (rk, rm) = (rates(&by_k), rates(&by_m));
    assert!(at_most_one_small_inversion(&rk, false), "{rk:?}");
    assert!(at_most_one_small_inversion(&rm, true), "{rm:?}");
    let ref_k: Vec<f64> = [2, 4, 6, 8]
        .iter()
        .map(|&k| reference_rate(&TrialConfig { k, ..base.clone() }))
        .collect();
    let ref_m: Vec<f64> = [20, 40, 60, 80]
        .iter()
        .map(|&m| reference_rate(&TrialConfig { m, ..base.clone() }))
        .collect();
    assert!(at_most_one_small_inversion(&ref_k, false), "{ref_k:?}");
    assert!(at_most_one_small_inversion(&ref_m, true), "{ref_m:?}");
    // with g the identity our solver is the reference
    assert_eq!(rk, ref_k);
    assert_eq!(rm, ref_m);
}

#[test]
fn ground_truth_solver_always_succeeds() {
    for g in Nonlinearity::ALL {
        for solver in [SolverKind::Omp, SolverKind::Cosamp, SolverKind::Gap, SolverKind::Ista] {
            for ensemble in [Ensemble::Gaussian, Ensemble::Bernoulli] {
                let c = TrialConfig {
                    m: 12,
                    n: 30,
                    k: 3,
                    ensemble,
                    nonlinearity: g,
                    solver,
                    trials: 5,
                    seed: 2,
                    ..TrialConfig::default()
                };
                let r = bench::run_phase_with(&c, |_, t| Ok(t.x_true.clone())).unwrap();
                assert_eq!(r.success_rate, 1.0);
                assert_eq!(r.mean_nmse, 0.0);
            }
        }
    }
    let one = TrialConfig {
        trials: 1,
        ..TrialConfig::default()
    };
    assert_eq!(
        bench::run_phase_with(&one, |_, t| Ok(t.x_true.clone()))
            .unwrap()
            .success_rate,
        1.0
    );
}

#[test]
fn solver_errors_count_as_failures() {
    let c = TrialConfig {
        trials: 6,
        ..TrialConfig::default()
    };
    let r = bench::run_phase_with(&c, |_, t| {
        if t.x_true[0] >= 0.0 {
            Err(nlsparse::Error::InvalidOption("forced".into()))
        } else {
            Ok(t.x_true.clone())
        }
    })
    .unwrap();
    assert_eq!(r.successes + r.solver_errors, 6);
    assert!(r.solver_errors > 0);
}

#[test]
fn trials_are_reproducible_in_isolation() {
    let c = TrialConfig {
        seed: 7,
        trials: 10,
        ..TrialConfig::default()
    };
    let a = bench::gen_trial(&c, 3).unwrap();
    let b = bench::gen_trial(&c, 3).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.x_true, b.x_true);
    assert_eq!(a.y, b.y);
    let other = bench::gen_trial(&c, 4).unwrap();
    assert_ne!(a.x_true, other.x_true);
}

#[test]
fn dense_square_identity_trial_is_consistent() {
    let c = TrialConfig {
        m: 6,
        n: 6,
        k: 6,
        trials: 1,
        ..TrialConfig::default()
    };
    let t = bench::gen_trial(&c, 0).unwrap();
    assert!(t.x_true.iter().all(|v| *v != 0.0));
    assert_eq!(t.y, mat_vec(t.model.op(), &t.x_true));
}

#[test]
fn bernoulli_columns_have_unit_norm() {
    let c = TrialConfig {
        ensemble: Ensemble::Bernoulli,
        m: 16,
        trials: 1,
        ..TrialConfig::default()
    };
    let t = bench::gen_trial(&c, 0).unwrap();
    let a = t.model.op();
    for col in a.column_iter() {
        assert!(col.iter().all(|v| (v.abs() - 0.25).abs() < 1e-15));
        assert!((col.norm() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn repeated_runs_agree_except_for_timing() {
    let c = TrialConfig {
        nonlinearity: Nonlinearity::SignedLog,
        trials: 30,
        seed: 12,
        ..TrialConfig::default()
    };
    let a = bench::run_phase(&c).unwrap();
    let b = bench::run_phase(&c).unwrap();
    assert_eq!((a.successes, a.solver_errors), (b.successes, b.solver_errors));
    assert_eq!(a.mean_nmse.to_bits(), b.mean_nmse.to_bits());
}

#[test]
fn invalid_configs_are_rejected() {
    for c in [
        TrialConfig {
            k: 0,
            ..TrialConfig::default()
        },
        TrialConfig {
            k: 50,
            m: 40,
            ..TrialConfig::default()
        },
        TrialConfig {
            m: 120,
            ..TrialConfig::default()
        },
        TrialConfig {
            trials: 0,
            ..TrialConfig::default()
        },
    ] {
        assert!(bench::run_phase(&c).is_err(), "{c:?}");
    }
    let cells = bench::sweep(
        &TrialConfig {
            trials: 3,
            ..TrialConfig::default()
        },
        &[2, 60],
        &[40],
    );
    assert!(cells[0].is_ok());
    assert!(cells[1].is_err());
}
