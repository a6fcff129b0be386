//! Multiplicative speckle: synthesis of calibrated noise and denoising by
//! nonlinear sparse recovery in the log domain.
//!
//! A speckled image is `x = x₀ · n`. Taking logarithms gives the observation
//! `y = log(x)`, and the clean image is recovered either as a wavelet
//! synthesis `x₀ = Hᵀα` with sparse `α` (OMP, CoSaMP, ISTA) or directly with
//! a cosparse total-variation prior (GAP). Intensities are divided by the
//! peak before the logarithm, so the solvers work on `(0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gap::{nl_gap, GapOptions};
use crate::greedy::{nl_cosamp, nl_omp, GreedyOptions};
use crate::ista::{nl_ista, IstaOptions};
use crate::linalg::{norm2, IdentityOperator, LinearOperator};
use crate::model::{MeasurementModel, ScalarMap};
use crate::nlls::{lm_fit, LmOptions, PenaltyOptions};
use crate::transforms::image::ImageBuffer;
use crate::transforms::metrics::psnr;
use crate::transforms::tv::tv_rows;
use crate::transforms::wavelet::{Wavelet2d, WaveletSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleParams {
    /// Input corruption level in dB; `f64::INFINITY` adds no noise.
    pub target_psnr: f64,
    pub seed: u64,
    /// Floor for log arguments, relative to the peak.
    pub clamp_eps: f64,
}

impl SpeckleParams {
    pub fn new(target_psnr: f64, seed: u64) -> Self {
        Self {
            target_psnr,
            seed,
            clamp_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckledImage {
    pub noisy: ImageBuffer,
    /// Standard deviation of the log-domain noise.
    pub sigma: f64,
    pub achieved_psnr: f64,
}

const CALIBRATION_STEPS: usize = 40;
const PSNR_SLACK: f64 = 0.5;

fn speckle_with(clean: &ImageBuffer, floor: f64, draws: &[f64], sigma: f64) -> ImageBuffer {
    let pixels = clean
        .pixels
        .iter()
        .zip(draws)
        .map(|(&p, &z)| p.max(floor) * (sigma * z).exp())
        .collect();
    ImageBuffer {
        pixels,
        ..clean.clone()
    }
}

/// Multiplies the image by `exp(ε)` with `ε ~ N(0, σ²)` i.i.d., choosing `σ`
/// by bisection so the result has the requested PSNR against `clean`.
pub fn add_speckle(clean: &ImageBuffer, params: &SpeckleParams) -> Result<SpeckledImage> {
    if !(params.clamp_eps > 0.0) || !(params.target_psnr > 0.0) {
        return Err(Error::InvalidOption(
            "speckle needs target_psnr > 0 and clamp_eps > 0".into(),
        ));
    }
    if params.target_psnr.is_infinite() {
        return Ok(SpeckledImage {
            noisy: clean.clone(),
            sigma: 0.0,
            achieved_psnr: f64::INFINITY,
        });
    }
    let floor = params.clamp_eps * clean.peak;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let draws: Vec<f64> = (0..clean.pixels.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let measure = |sigma: f64| psnr(clean, &speckle_with(clean, floor, &draws, sigma));

    // PSNR decreases monotonically in sigma for fixed draws.
    let mut lo = 0.0;
    let mut hi = 0.05;
    let mut steps = 0;
    while measure(hi)? > params.target_psnr {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps >= CALIBRATION_STEPS {
            return Err(Error::Calibration(format!(
                "could not bracket {} dB",
                params.target_psnr
            )));
        }
    }
    let mut sigma = hi;
    let mut achieved = measure(hi)?;
    for _ in 0..CALIBRATION_STEPS {
        if (achieved - params.target_psnr).abs() <= 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = measure(mid)?;
        if p > params.target_psnr {
            lo = mid;
        } else {
            hi = mid;
        }
        sigma = mid;
        achieved = p;
    }
    if (achieved - params.target_psnr).abs() > PSNR_SLACK {
        return Err(Error::Calibration(format!(
            "reached {achieved:.3} dB for a target of {} dB",
            params.target_psnr
        )));
    }
    Ok(SpeckledImage {
        noisy: speckle_with(clean, floor, &draws, sigma),
        sigma,
        achieved_psnr: achieved,
    })
}

/// `ln t` above a floor, continued linearly (with matching slope) below it,
/// so the map stays monotone and differentiable when a synthesized
/// intensity dips to or below zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFloor {
    pub floor: f64,
}

impl ScalarMap for LogFloor {
    fn value(&self, t: f64) -> f64 {
        if t >= self.floor {
            t.ln()
        } else {
            self.floor.ln() + (t - self.floor) / self.floor
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        1.0 / t.max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Omp,
    Cosamp,
    Gap,
    Ista,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [Self::Omp, Self::Cosamp, Self::Gap, Self::Ista];

    pub fn name(self) -> &'static str {
        match self {
            Self::Omp => "omp",
            Self::Cosamp => "cosamp",
            Self::Gap => "gap",
            Self::Ista => "ista",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omp" => Ok(Self::Omp),
            "cosamp" => Ok(Self::Cosamp),
            "gap" => Ok(Self::Gap),
            "ista" => Ok(Self::Ista),
            other => Err(Error::InvalidOption(format!("unknown method '{other}'"))),
        }
    }
}

/// How GAP weighs the data term against the analysis prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapWeight {
    /// `β = 1 / (2σ²)`.
    NoiseMatched,
    /// `β` chosen so the log-domain residual matches `σ · √N`.
    Discrepancy,
}

/// Lower end of the discrepancy search, relative to `1 / (2σ²)`.
const BETA_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseMethod {
    pub kind: MethodKind,
    /// Fraction of wavelet coefficients kept (OMP/CoSaMP), or of TV rows
    /// pruned (GAP).
    pub sparsity_fraction: f64,
    /// Log-domain noise level; estimated from the data when absent.
    pub noise_sigma: Option<f64>,
    /// ISTA threshold.
    pub tau: f64,
    pub clamp_eps: f64,
    pub wavelet: WaveletSpec,
    pub residual_tol: f64,
    pub cosamp_max_iters: usize,
    pub ista_max_iters: usize,
    /// OMP selects its atoms, and GAP prunes its rows, over this many
    /// refits.
    pub stages: usize,
    pub gap_weight: GapWeight,
    /// Bisection steps for [`GapWeight::Discrepancy`].
    pub beta_search_steps: usize,
    pub lm: LmOptions,
}

impl DenoiseMethod {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            sparsity_fraction: 0.10,
            noise_sigma: None,
            tau: 3e-3,
            clamp_eps: 1e-6,
            wavelet: WaveletSpec::default(),
            residual_tol: 1e-8,
            cosamp_max_iters: 30,
            ista_max_iters: 2000,
            stages: 32,
            gap_weight: GapWeight::Discrepancy,
            beta_search_steps: 10,
            lm: LmOptions {
                max_iters: 30,
                grad_tol: 1e-9,
                cost_rel_tol: 1e-6,
                cg_max_iters: 40,
                cg_tol: 1e-6,
                ..LmOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub image: ImageBuffer,
    /// Wavelet coefficients on the padded grid, for the synthesis methods.
    pub coefficients: Option<Vec<f64>>,
    /// `‖y − f(·)‖₂` in the normalized log domain at return.
    pub log_residual: f64,
    /// Log-domain noise level the method used or estimated.
    pub sigma: f64,
    /// Data weight selected for GAP.
    pub beta: Option<f64>,
}

/// Next dyadic size no smaller than `n` and the wavelet's minimum.
fn dyadic(n: usize, spec: WaveletSpec) -> usize {
    n.next_power_of_two().max(8).max(1 << spec.levels)
}

/// Mirror-extends a row-major image to `pw × ph`, centred.
fn pad_symmetric(pixels: &[f64], w: usize, h: usize, pw: usize, ph: usize) -> (Vec<f64>, usize, usize) {
    let (left, top) = ((pw - w) / 2, (ph - h) / 2);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let mut k = i.rem_euclid(period);
        if k >= n {
            k = period - 1 - k;
        }
        k as usize
    };
    let mut out = vec![0.0; pw * ph];
    for r in 0..ph {
        let sr = reflect(r as isize - top as isize, h);
        for c in 0..pw {
            let sc = reflect(c as isize - left as isize, w);
            out[r * pw + c] = pixels[sr * w + sc];
        }
    }
    (out, left, top)
}

fn crop(pixels: &[f64], pw: usize, left: usize, top: usize, w: usize, h: usize) -> Vec<f64> {
    (0..h)
        .flat_map(|r| pixels[(top + r) * pw + left..(top + r) * pw + left + w].iter().copied())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust noise estimate `median(|d|) / 0.6745` over the finest diagonal
/// wavelet band of a log-domain image.
pub fn estimate_log_sigma(y: &[f64], width: usize, height: usize, spec: WaveletSpec) -> Result<f64> {
    let wt = Wavelet2d::new(width, height, spec)?;
    let mut c = vec![0.0; wt.len()];
    wt.forward(y, &mut c);
    let finest = (width / 2) * (height / 2);
    let hh = &c[c.len() - finest..];
    Ok(median(hh.iter().map(|v| v.abs()).collect()) / 0.6745)
}

/// Removes multiplicative noise from `noisy` with the selected solver.
pub fn denoise(noisy: &ImageBuffer, method: &DenoiseMethod) -> Result<DenoiseOutput> {
    if !(method.sparsity_fraction > 0.0 && method.sparsity_fraction <= 1.0) {
        return Err(Error::InvalidOption("sparsity_fraction must lie in (0, 1]".into()));
    }
    if !(method.clamp_eps > 0.0) {
        return Err(Error::InvalidOption("clamp_eps must be positive".into()));
    }
    let (w, h, peak) = (noisy.width, noisy.height, noisy.peak);
    let floor = method.clamp_eps;
    let normalized: Vec<f64> = noisy.pixels.iter().map(|p| (p / peak).max(floor)).collect();
    let (pw, ph) = (dyadic(w, method.wavelet), dyadic(h, method.wavelet));
    let (padded, left, top) = pad_symmetric(&normalized, w, h, pw, ph);
    let y: Vec<f64> = padded.iter().map(|v| v.ln()).collect();
    let n = pw * ph;
    let g = LogFloor { floor };
    let sigma = match method.noise_sigma {
        Some(s) => s,
        None => estimate_log_sigma(&y, pw, ph, method.wavelet)?,
    };

    let mut beta_used = None;
    let (estimate, coefficients, log_residual) = match method.kind {
        MethodKind::Omp | MethodKind::Cosamp | MethodKind::Ista => {
            let wt = Wavelet2d::new(pw, ph, method.wavelet)?;
            let model = MeasurementModel::new(wt, g)?;
            let alpha = match method.kind {
                MethodKind::Ista => {
                    // Flat start at the geometric mean of the observation.
                    let level = (y.iter().sum::<f64>() / n as f64).exp();
                    let mut x0 = vec![0.0; n];
                    model.op().forward(&vec![level; n], &mut x0);
                    // Lipschitz bound at the data: the synthesis is orthonormal
                    // and g' = 1/t, so the darkest observed pixel sets the step.
                    let darkest = y.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                    let opts = IstaOptions {
                        step_sigma: Some(0.5 * (2.0 * darkest).exp()),
                        threshold_tau: method.tau,
                        max_iters: method.ista_max_iters,
                        x_tol: 1e-9,
                        x0: Some(x0),
                    };
                    nl_ista(&model, &y, &opts)?.x
                }
                kind => {
                    let k = ((method.sparsity_fraction * n as f64).ceil() as usize).clamp(1, n);
                    let opts = GreedyOptions {
                        k,
                        residual_tol: method.residual_tol,
                        max_iters: method.cosamp_max_iters,
                        atoms_per_iter: k.div_ceil(method.stages.max(1)),
                        lm: method.lm.clone(),
                    };
                    if kind == MethodKind::Omp {
                        nl_omp(&model, &y, &opts)?.x
                    } else {
                        let opts = GreedyOptions {
                            k: k.min(n / 2),
                            ..opts
                        };
                        let sol = nl_cosamp(&model, &y, &opts)?;
                        // Pruning leaves an unfitted estimate; refit on the kept support.
                        if sol.support.is_empty() {
                            sol.x
                        } else {
                            lm_fit(&model, &y, &sol.support, &sol.x, &method.lm)?.x
                        }
                    }
                }
            };
            let residual = model.residual_norm(&alpha, &y)?;
            let mut pixels = vec![0.0; n];
            model.op().inverse(&alpha, &mut pixels);
            (pixels, Some(alpha), residual)
        }
        MethodKind::Gap => {
            let op = tv_rows(pw, ph);
            let model = MeasurementModel::new(IdentityOperator(n), g)?;
            if !(sigma > 0.0) {
                return Err(Error::InvalidOption(
                    "GAP denoising needs a positive noise level".into(),
                ));
            }
            let p = op.nrows();
            let prune_count = ((method.sparsity_fraction * p as f64).floor() as usize).min(p - 1);
            let run = |beta: f64| -> Result<(Vec<f64>, f64)> {
                let opts = GapOptions {
                    prune_count,
                    rows_per_iter: prune_count.div_ceil(method.stages.max(1)).max(1),
                    penalty: PenaltyOptions {
                        beta_init: beta,
                        max_outer: 1,
                        inner: method.lm.clone(),
                        ..PenaltyOptions::default()
                    },
                };
                let sol = nl_gap(&op, &model, &y, &opts)?;
                let residual = model.residual_norm(&sol.x, &y)?;
                Ok((sol.x, residual))
            };
            let noise_matched = 1.0 / (2.0 * sigma * sigma);
            let (x, residual, beta) = match method.gap_weight {
                GapWeight::NoiseMatched => {
                    let (x, r) = run(noise_matched)?;
                    (x, r, noise_matched)
                }
                GapWeight::Discrepancy => {
                    discrepancy_search(run, noise_matched, sigma * (n as f64).sqrt(), method.beta_search_steps)?
                }
            };
            beta_used = Some(beta);
            (x, None, residual)
        }
    };

    let pixels = crop(&estimate, pw, left, top, w, h)
        .into_iter()
        .map(|v| (v * peak).clamp(0.0, peak))
        .collect();
    Ok(DenoiseOutput {
        image: ImageBuffer::new(w, h, pixels, peak)?,
        coefficients,
        log_residual,
        sigma,
        beta: beta_used,
    })
}

/// Largest data weight whose fit leaves a residual of at least `target`,
/// by bisection on `log β` below `beta_max`. The residual shrinks as `β`
/// grows, so this is the least-smoothing estimate consistent with the noise.
fn discrepancy_search<F>(run: F, beta_max: f64, target: f64, steps: usize) -> Result<(Vec<f64>, f64, f64)>
where
    F: Fn(f64) -> Result<(Vec<f64>, f64)>,
{
    let (x, r) = run(beta_max)?;
    if r >= target {
        return Ok((x, r, beta_max));
    }
    let mut lo = (beta_max * BETA_RANGE).ln();
    let mut hi = beta_max.ln();
    let (x, r) = run(lo.exp())?;
    if r < target {
        return Ok((x, r, lo.exp()));
    }
    let mut best = (x, r, lo.exp());
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let (x, r) = run(mid.exp())?;
        if r >= target {
            lo = mid;
            best = (x, r, mid.exp());
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// `‖log(a) − log(b)‖₂` on normalized intensities, both floored at `eps`.
pub fn log_distance(a: &ImageBuffer, b: &ImageBuffer, eps: f64) -> Result<f64> {
    a.same_shape(b)?;
    let d: Vec<f64> = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x / a.peak).max(eps).ln() - (y / b.peak).max(eps).ln())
        .collect();
    Ok(norm2(&d))
}
