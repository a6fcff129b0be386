mod config;
mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use nlsparse::bench::{self, Ensemble, PhaseResult, SolverKind, TrialConfig};
use nlsparse::model::gradient_check;
use nlsparse::speckle::{add_speckle, denoise, DenoiseMethod, MethodKind, SpeckleParams};
use nlsparse::transforms::image::phantom;
use nlsparse::transforms::{psnr, ssim, ImageBuffer};
use nlsparse::Nonlinearity;

use manifest::{sibling, RunManifest};

const METRICS_HEADER: &str = "image,method,input_psnr,output_psnr,input_ssim,output_ssim,seed";
const GRADCHECK_LIMIT: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "nlsparse", version, about = "Sparse and cosparse recovery for y = g(Ax)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo success rates over a grid of sparsities and measurement counts.
    Phase(PhaseArgs),
    /// Add calibrated speckle to a clean PGM image and denoise it.
    Denoise(DenoiseArgs),
    /// Check the analytic residual gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write the piecewise-constant test image as PGM.
    Phantom(PhantomArgs),
}

/// Comma-separated list of counts.
#[derive(Debug, Clone)]
struct Counts(Vec<usize>);

fn parse_counts(s: &str) -> std::result::Result<Counts, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("'{t}' is not a count")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(Counts(v))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PhaseArgs {
    /// omp, cosamp, gap or ista
    #[arg(long, default_value = "omp")]
    solver: SolverKind,
    /// identity, exp or slog
    #[arg(long, default_value = "identity")]
    model: Nonlinearity,
    /// gaussian or bernoulli
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Sparsity, or a comma-separated list of sparsities.
    #[arg(long, default_value = "4", value_parser = parse_counts)]
    k: Counts,
    /// Measurement counts to sweep; overrides --m.
    #[arg(long = "m-list", value_parser = parse_counts)]
    m_list: Option<Counts>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// NMSE below which a trial counts as a success.
    #[arg(long = "success-nmse", default_value_t = 1e-3)]
    success_nmse: f64,
    /// Threshold for the ista solver.
    #[arg(long = "ista-tau", default_value_t = 1e-4)]
    ista_tau: f64,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PhaseArgs {
    fn options(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("solver", self.solver.to_string()),
            ("model", self.model.name().to_string()),
            ("ensemble", self.ensemble.to_string()),
            ("m", self.m.to_string()),
            ("n", self.n.to_string()),
            ("k", join(&self.k.0)),
        ];
        if let Some(ms) = &self.m_list {
            v.push(("m-list", join(&ms.0)));
        }
        v.extend([
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("success-nmse", self.success_nmse.to_string()),
            ("ista-tau", self.ista_tau.to_string()),
        ]);
        if let Some(j) = self.jobs {
            v.push(("jobs", j.to_string()));
        }
        if let Some(out) = &self.out {
            v.push(("out", out.display().to_string()));
        }
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct DenoiseArgs {
    /// Clean 8-bit binary PGM.
    #[arg(long = "in")]
    input: PathBuf,
    /// Where to write the speckled image.
    #[arg(long)]
    noisy: Option<PathBuf>,
    /// Where to write the denoised image.
    #[arg(long)]
    out: PathBuf,
    /// omp, cosamp, gap or ista
    #[arg(long, default_value = "omp")]
    method: MethodKind,
    /// Target PSNR of the speckled image in dB; inf adds no noise.
    #[arg(long = "input-psnr", default_value_t = 10.0)]
    input_psnr: f64,
    /// Fraction of wavelet coefficients kept, or of TV rows pruned for gap.
    #[arg(long, default_value_t = 0.10)]
    sparsity: f64,
    /// Threshold for ista.
    #[arg(long, default_value_t = 3e-3)]
    tau: f64,
    /// Log-domain noise level; estimated from the image when absent.
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,
    /// Refits over which omp selects atoms and gap prunes rows.
    #[arg(long, default_value_t = 32)]
    stages: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-image metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

impl DenoiseArgs {
    fn options(&self) -> Vec<(String, String)> {
        let mut v = vec![("in", self.input.display().to_string())];
        if let Some(p) = &self.noisy {
            v.push(("noisy", p.display().to_string()));
        }
        v.extend([
            ("out", self.out.display().to_string()),
            ("method", self.method.name().to_string()),
            ("input-psnr", self.input_psnr.to_string()),
            ("sparsity", self.sparsity.to_string()),
            ("tau", self.tau.to_string()),
        ]);
        if let Some(s) = self.noise_sigma {
            v.push(("noise-sigma", s.to_string()));
        }
        v.push(("stages", self.stages.to_string()));
        v.push(("seed", self.seed.to_string()));
        if let Some(p) = &self.metrics {
            v.push(("metrics", p.display().to_string()));
        }
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Args)]
#[command(args_override_self = true)]
struct GradcheckArgs {
    /// Random instances per nonlinearity.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PhantomArgs {
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run_phase(args: &PhaseArgs) -> Result<ExitCode> {
    let base = TrialConfig {
        m: args.m,
        n: args.n,
        k: args.k.0[0],
        ensemble: args.ensemble,
        nonlinearity: args.model,
        solver: args.solver,
        trials: args.trials,
        seed: args.seed,
        success_nmse: args.success_nmse,
        ista_tau: args.ista_tau,
    };
    let ms = args.m_list.as_ref().map_or(vec![args.m], |l| l.0.clone());
    let cells = match args.jobs {
        Some(0) => return Err(anyhow!("--jobs must be at least 1")),
        Some(j) => bench::sweep_with(&base, &args.k.0, &ms, |c| bench::run_phase_jobs(c, j)),
        None => bench::sweep(&base, &args.k.0, &ms),
    };
    let mut rows: Vec<PhaseResult> = Vec::new();
    let mut failed = 0;
    for (i, cell) in cells.into_iter().enumerate() {
        match cell {
            Ok(r) => rows.push(r),
            Err(e) => {
                let (k, m) = (args.k.0[i / ms.len()], ms[i % ms.len()]);
                eprintln!("error: cell k={k} m={m}: {e}");
                failed += 1;
            }
        }
    }
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            bench::write_csv(&mut w, &rows)?;
            w.flush()?;
            let notes = sibling(path, "notes");
            fs::write(&notes, bench::NOTES).with_context(|| format!("writing {}", notes.display()))?;
            let man = RunManifest::new("phase", args.options());
            man.write_beside(path)?;
            man.write_beside(&notes)?;
        }
        None => {
            let stdout = std::io::stdout();
            bench::write_csv(stdout.lock(), &rows)?;
        }
    }
    if failed > 0 {
        return Err(anyhow!("{failed} of {} cells failed", failed + rows.len()));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_denoise(args: &DenoiseArgs) -> Result<ExitCode> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let clean = ImageBuffer::read_pgm(BufReader::new(file))?;
    let speckled = add_speckle(&clean, &SpeckleParams::new(args.input_psnr, args.seed))?;

    let mut method = DenoiseMethod::new(args.method);
    method.sparsity_fraction = args.sparsity;
    method.tau = args.tau;
    method.noise_sigma = args.noise_sigma;
    method.stages = args.stages;
    let result = denoise(&speckled.noisy, &method)?;

    let man = RunManifest::new("denoise", args.options());
    let mut written = Vec::new();
    if let Some(path) = &args.noisy {
        speckled.noisy.write_pgm(create(path)?)?;
        written.push(path.clone());
    }
    result.image.write_pgm(create(&args.out)?)?;
    written.push(args.out.clone());

    let row = format!(
        "{},{},{:.4},{:.4},{:.4},{:.4},{}",
        args.input
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        args.method.name(),
        psnr(&clean, &speckled.noisy)?,
        psnr(&clean, &result.image)?,
        ssim(&clean, &speckled.noisy)?,
        ssim(&clean, &result.image)?,
        args.seed
    );
    if let Some(path) = &args.metrics {
        let mut w = create(path)?;
        writeln!(w, "{METRICS_HEADER}\n{row}")?;
        w.flush()?;
        written.push(path.clone());
    } else {
        println!("{METRICS_HEADER}\n{row}");
    }
    for p in &written {
        man.write_beside(p)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let mut ok = true;
    for g in Nonlinearity::ALL {
        let r = gradient_check(g, args.instances, 10, 25, 1e-5, args.seed)?;
        let pass = r.max_relative_error < GRADCHECK_LIMIT;
        ok &= pass;
        println!(
            "{:<8} max relative error {:.3e} over {} instances: {}",
            g.name(),
            r.max_relative_error,
            r.instances,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_phantom(args: &PhantomArgs) -> Result<ExitCode> {
    if args.width == 0 || args.height == 0 {
        return Err(anyhow!("image dimensions must be positive"));
    }
    phantom(args.width, args.height, 255.0).write_pgm(create(&args.out)?)?;
    let opts = vec![
        ("width".to_string(), args.width.to_string()),
        ("height".to_string(), args.height.to_string()),
        ("out".to_string(), args.out.display().to_string()),
    ];
    RunManifest::new("phantom", opts).write_beside(&args.out)?;
    Ok(ExitCode::SUCCESS)
}

/// Applies `--config` and parses. `Err` carries the exit code for bad
/// arguments (or 0 for `--help`).
fn parse_args(mut argv: Vec<String>) -> std::result::Result<Cli, ExitCode> {
    let usage_error = |msg: String| {
        eprintln!("error: {msg}\n\nFor more information, try '--help'.");
        ExitCode::from(2)
    };
    let config = config::take_config_flag(&mut argv).map_err(|e| usage_error(format!("{e:#}")))?;
    if let Some(path) = config {
        let pairs = config::load(Path::new(&path)).map_err(|e| usage_error(format!("{e:#}")))?;
        argv = config::splice(&argv, &pairs).map_err(|e| usage_error(format!("{e:#}")))?;
    }
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        ExitCode::from(e.exit_code() as u8)
    })
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match &cli.command {
        Command::Phase(a) => run_phase(a),
        Command::Denoise(a) => run_denoise(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Phantom(a) => run_phantom(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
