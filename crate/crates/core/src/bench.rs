//! Monte Carlo harness for phase-transition experiments.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial)`, so
//! results do not depend on scheduling or on which other trials ran.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::gap::{nl_gap, GapOptions};
use crate::greedy::{nl_cosamp, nl_omp, GreedyOptions};
use crate::ista::{nl_ista, IstaOptions};
use crate::linalg::norm2;
use crate::model::{MeasurementModel, Nonlinearity};
use crate::transforms::tv::FirstDifference;

pub const CSV_HEADER: &str = "solver,model,ensemble,m,n,k,trials,successes,success_rate,mean_nmse,wall_seconds";

/// Written next to every results CSV.
pub const NOTES: &str = "\
nonzero amplitudes: i.i.d. N(0,1) on a uniformly random k-subset
matrix columns: scaled to unit l2 norm after sampling
gap trials: piecewise-constant signals with k jumps, analysis operator = first differences, prune_count = k
success: nmse < success_nmse with nmse = ||x - xhat||_2 / ||x||_2
seeding: ChaCha8 seeded from the run seed, one stream per trial index
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ensemble {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Omp,
    Cosamp,
    Gap,
    Ista,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Bernoulli => "bernoulli",
        }
    }
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [Self::Omp, Self::Cosamp, Self::Gap, Self::Ista];

    pub fn name(self) -> &'static str {
        match self {
            Self::Omp => "omp",
            Self::Cosamp => "cosamp",
            Self::Gap => "gap",
            Self::Ista => "ista",
        }
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "bernoulli" | "rademacher" => Ok(Self::Bernoulli),
            other => Err(Error::InvalidOption(format!("unknown ensemble '{other}'"))),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omp" => Ok(Self::Omp),
            "cosamp" => Ok(Self::Cosamp),
            "gap" => Ok(Self::Gap),
            "ista" => Ok(Self::Ista),
            other => Err(Error::InvalidOption(format!("unknown solver '{other}'"))),
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub ensemble: Ensemble,
    pub nonlinearity: Nonlinearity,
    pub solver: SolverKind,
    pub trials: usize,
    pub seed: u64,
    pub success_nmse: f64,
    /// Threshold for the ISTA solver.
    pub ista_tau: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            m: 40,
            n: 100,
            k: 4,
            ensemble: Ensemble::Gaussian,
            nonlinearity: Nonlinearity::Identity,
            solver: SolverKind::Omp,
            trials: 1000,
            seed: 0,
            success_nmse: 1e-3,
            ista_tau: 1e-4,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m || self.m > self.n {
            return Err(Error::InvalidOption(format!(
                "need 1 <= k <= m <= n, got k = {}, m = {}, n = {}",
                self.k, self.m, self.n
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidOption("trials must be at least 1".into()));
        }
        if !(self.success_nmse > 0.0) || !(self.ista_tau >= 0.0) {
            return Err(Error::InvalidOption(
                "success_nmse > 0 and ista_tau >= 0 required".into(),
            ));
        }
        if self.solver == SolverKind::Cosamp && 2 * self.k > self.n {
            return Err(Error::InvalidOption("CoSaMP needs 2k <= n".into()));
        }
        if self.solver == SolverKind::Gap && self.k >= self.n - 1 {
            return Err(Error::InvalidOption("GAP trials need k < n - 1".into()));
        }
        Ok(())
    }
}

/// One generated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub model: MeasurementModel,
    pub x_true: Vec<f64>,
    pub y: Vec<f64>,
}

/// The RNG stream for one trial.
pub fn trial_rng(seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index as u64);
    rng
}

/// Draws an `m × n` matrix with i.i.d. N(0,1) or ±1 entries, unscaled.
pub fn sample_matrix<R: Rng>(rng: &mut R, m: usize, n: usize, ensemble: Ensemble) -> DMatrix<f64> {
    // Column-major fill, so each column comes from a contiguous run of draws.
    DMatrix::from_fn(m, n, |_, _| match ensemble {
        Ensemble::Gaussian => StandardNormal.sample(rng),
        Ensemble::Bernoulli => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    })
}

pub fn normalize_columns(a: &mut DMatrix<f64>) {
    for mut c in a.column_iter_mut() {
        let nrm = c.norm();
        if nrm > 0.0 {
            c /= nrm;
        }
    }
}

pub fn gen_trial(cfg: &TrialConfig, trial_index: usize) -> Result<Trial> {
    cfg.validate()?;
    if trial_index >= cfg.trials {
        return Err(Error::IndexOutOfRange {
            index: trial_index,
            len: cfg.trials,
        });
    }
    let mut rng = trial_rng(cfg.seed, trial_index);
    let mut a = sample_matrix(&mut rng, cfg.m, cfg.n, cfg.ensemble);
    normalize_columns(&mut a);
    let x_true = match cfg.solver {
        SolverKind::Gap => {
            // Piecewise constant with k jumps: k nonzeros in the first differences.
            let jumps = sample(&mut rng, cfg.n - 1, cfg.k).into_vec();
            let mut d = vec![0.0; cfg.n - 1];
            for j in jumps {
                d[j] = StandardNormal.sample(&mut rng);
            }
            let mut level: f64 = StandardNormal.sample(&mut rng);
            let mut x = Vec::with_capacity(cfg.n);
            x.push(level);
            for dj in d {
                level += dj;
                x.push(level);
            }
            x
        }
        _ => {
            let mut x = vec![0.0; cfg.n];
            for j in sample(&mut rng, cfg.n, cfg.k).into_vec() {
                x[j] = StandardNormal.sample(&mut rng);
            }
            x
        }
    };
    let model = MeasurementModel::new(a, cfg.nonlinearity)?;
    let y = model.apply(&x_true)?;
    Ok(Trial { model, x_true, y })
}

/// `‖original − reconstructed‖₂ / ‖original‖₂`
pub fn nmse(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    check_len("reconstruction", original.len(), reconstructed.len())?;
    let denom = norm2(original);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = original.iter().zip(reconstructed).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / denom)
}

/// Runs the configured solver on one trial.
pub fn solve_trial(cfg: &TrialConfig, trial: &Trial) -> Result<Vec<f64>> {
    let (model, y) = (&trial.model, &trial.y);
    match cfg.solver {
        SolverKind::Omp => Ok(nl_omp(model, y, &GreedyOptions::new(cfg.k))?.x),
        SolverKind::Cosamp => Ok(nl_cosamp(model, y, &GreedyOptions::new(cfg.k))?.x),
        SolverKind::Gap => {
            let op = FirstDifference::new(cfg.n);
            Ok(nl_gap(&op, model, y, &GapOptions::new(cfg.k))?.x)
        }
        SolverKind::Ista => {
            let opts = IstaOptions {
                threshold_tau: cfg.ista_tau,
                max_iters: 5000,
                ..IstaOptions::default()
            };
            Ok(nl_ista(model, y, &opts)?.x)
        }
    }
}

/// Outcome of one trial: `Ok(nmse)` or the solver's error.
pub type TrialOutcome = std::result::Result<f64, Error>;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResult {
    pub config: TrialConfig,
    pub successes: usize,
    /// Trials whose solver returned an error (counted as failures).
    pub solver_errors: usize,
    pub success_rate: f64,
    /// Mean NMSE over trials that produced an estimate; NaN if none did.
    pub mean_nmse: f64,
    /// NaN on targets without a clock.
    pub wall_seconds: f64,
}

impl PhaseResult {
    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6e},{:.3}",
            c.solver,
            c.nonlinearity.name(),
            c.ensemble,
            c.m,
            c.n,
            c.k,
            c.trials,
            self.successes,
            self.success_rate,
            self.mean_nmse,
            self.wall_seconds
        )
    }
}

fn outcomes<F>(cfg: &TrialConfig, solver: &F) -> Vec<TrialOutcome>
where
    F: Fn(&TrialConfig, &Trial) -> Result<Vec<f64>> + Sync,
{
    let one = |i: usize| -> TrialOutcome {
        let trial = gen_trial(cfg, i)?;
        let est = solver(cfg, &trial)?;
        nmse(&trial.x_true, &est)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..cfg.trials).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.trials).map(one).collect()
    }
}

fn aggregate(cfg: &TrialConfig, results: &[TrialOutcome], wall_seconds: f64) -> PhaseResult {
    let mut successes = 0;
    let mut solver_errors = 0;
    let mut total = 0.0;
    let mut counted = 0;
    for r in results {
        match r {
            Ok(e) => {
                if *e < cfg.success_nmse {
                    successes += 1;
                }
                if e.is_finite() {
                    total += e;
                    counted += 1;
                }
            }
            Err(_) => solver_errors += 1,
        }
    }
    PhaseResult {
        config: cfg.clone(),
        successes,
        solver_errors,
        success_rate: successes as f64 / cfg.trials as f64,
        mean_nmse: if counted > 0 { total / counted as f64 } else { f64::NAN },
        wall_seconds,
    }
}

// wasm32-unknown-unknown has no clock; wall time is reported as NaN there.
#[cfg(not(target_arch = "wasm32"))]
fn stopwatch() -> impl FnOnce() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn stopwatch() -> impl FnOnce() -> f64 {
    || f64::NAN
}

/// Runs every trial with a caller-supplied solver.
pub fn run_phase_with<F>(cfg: &TrialConfig, solver: F) -> Result<PhaseResult>
where
    F: Fn(&TrialConfig, &Trial) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let elapsed = stopwatch();
    let results = outcomes(cfg, &solver);
    Ok(aggregate(cfg, &results, elapsed()))
}

pub fn run_phase(cfg: &TrialConfig) -> Result<PhaseResult> {
    run_phase_with(cfg, solve_trial)
}

/// [`run_phase`] on a dedicated pool of `jobs` threads.
#[cfg(feature = "parallel")]
pub fn run_phase_jobs(cfg: &TrialConfig, jobs: usize) -> Result<PhaseResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidOption(format!("thread pool: {e}")))?;
    pool.install(|| run_phase(cfg))
}

/// One `run_phase` per `(k, m)` cell, `k` varying slowest. Invalid cells
/// yield an error entry and the sweep continues.
pub fn sweep(base: &TrialConfig, ks: &[usize], ms: &[usize]) -> Vec<Result<PhaseResult>> {
    sweep_with(base, ks, ms, run_phase)
}

pub fn sweep_with<F>(base: &TrialConfig, ks: &[usize], ms: &[usize], run: F) -> Vec<Result<PhaseResult>>
where
    F: Fn(&TrialConfig) -> Result<PhaseResult>,
{
    let mut out = Vec::with_capacity(ks.len() * ms.len());
    for &k in ks {
        for &m in ms {
            let cfg = TrialConfig { k, m, ..base.clone() };
            out.push(run(&cfg));
        }
    }
    out
}

pub fn write_csv<W: Write>(mut w: W, results: &[PhaseResult]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in results {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
