//! Browser bindings for the demo page in `www/`.
//!
//! Every export works on small problems so that it stays interactive on a
//! single thread. Images travel as row-major 8-bit grayscale.

use nlsparse::bench::{self, SolverKind, TrialConfig};
use nlsparse::speckle::{add_speckle, denoise, DenoiseMethod, MethodKind, SpeckleParams};
use nlsparse::transforms::image::phantom;
use nlsparse::transforms::{dwt2, idwt2, psnr, ssim, ImageBuffer, WaveletSpec};
use nlsparse::Nonlinearity;
use wasm_bindgen::prelude::*;

fn js(e: nlsparse::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Success rate for each sparsity `1..=k_max`.
pub fn success_curve(
    model: &str,
    solver: &str,
    m: usize,
    n: usize,
    k_max: usize,
    trials: usize,
    seed: u64,
) -> nlsparse::Result<Vec<f64>> {
    let base = TrialConfig {
        m,
        n,
        nonlinearity: model.parse::<Nonlinearity>()?,
        solver: solver.parse::<SolverKind>()?,
        trials,
        seed,
        ..TrialConfig::default()
    };
    let ks: Vec<usize> = (1..=k_max).collect();
    bench::sweep(&base, &ks, &[m])
        .into_iter()
        .map(|r| r.map(|p| p.success_rate))
        .collect()
}

#[wasm_bindgen]
pub fn phase_curve(
    model: &str,
    solver: &str,
    m: usize,
    n: usize,
    k_max: usize,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    success_curve(model, solver, m, n, k_max, trials, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub struct DenoiseDemo {
    noisy: Vec<u8>,
    denoised: Vec<u8>,
    pub input_psnr: f64,
    pub output_psnr: f64,
    pub input_ssim: f64,
    pub output_ssim: f64,
}

#[wasm_bindgen]
impl DenoiseDemo {
    #[wasm_bindgen(getter)]
    pub fn noisy(&self) -> Vec<u8> {
        self.noisy.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn denoised(&self) -> Vec<u8> {
        self.denoised.clone()
    }
}

pub fn run_denoise(clean: &ImageBuffer, target_psnr: f64, method: &str, seed: u64) -> nlsparse::Result<DenoiseDemo> {
    let noisy = add_speckle(clean, &SpeckleParams::new(target_psnr, seed))?.noisy;
    let out = denoise(&noisy, &DenoiseMethod::new(method.parse::<MethodKind>()?))?.image;
    Ok(DenoiseDemo {
        input_psnr: psnr(clean, &noisy)?,
        output_psnr: psnr(clean, &out)?,
        input_ssim: ssim(clean, &noisy)?,
        output_ssim: ssim(clean, &out)?,
        noisy: noisy.to_u8(),
        denoised: out.to_u8(),
    })
}

/// Speckles `pixels` (or the built-in phantom when empty) and denoises it.
#[wasm_bindgen]
pub fn denoise_demo(
    width: usize,
    height: usize,
    pixels: &[u8],
    target_psnr: f64,
    method: &str,
    seed: u32,
) -> Result<DenoiseDemo, JsError> {
    let clean = if pixels.is_empty() {
        phantom(width, height, 255.0)
    } else {
        ImageBuffer::from_u8(width, height, pixels).map_err(js)?
    };
    run_denoise(&clean, target_psnr, method, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn phantom_pixels(width: usize, height: usize) -> Vec<u8> {
    phantom(width, height, 255.0).to_u8()
}

#[wasm_bindgen]
pub struct Compressed {
    pixels: Vec<u8>,
    pub kept: usize,
    pub psnr: f64,
}

#[wasm_bindgen]
impl Compressed {
    #[wasm_bindgen(getter)]
    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }
}

/// Keeps the largest `fraction` of db8 coefficients and reconstructs.
pub fn compress(img: &ImageBuffer, fraction: f64) -> nlsparse::Result<Compressed> {
    let spec = WaveletSpec::default();
    let mut c = dwt2(img, spec)?;
    let keep = ((fraction.clamp(0.0, 1.0) * c.len() as f64).round() as usize).max(1);
    let mut mags: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let cut = mags[keep - 1];
    let mut kept = 0;
    for v in c.iter_mut() {
        if v.abs() >= cut && kept < keep {
            kept += 1;
        } else {
            *v = 0.0;
        }
    }
    let back = idwt2(&c, img.width, img.height, img.peak, spec)?.clipped();
    Ok(Compressed {
        psnr: psnr(img, &back)?,
        pixels: back.to_u8(),
        kept,
    })
}

/// Best `fraction`-term wavelet approximation of `pixels` (or the phantom
/// when empty). Sides must be powers of two.
#[wasm_bindgen]
pub fn wavelet_compress(width: usize, height: usize, pixels: &[u8], fraction: f64) -> Result<Compressed, JsError> {
    let img = if pixels.is_empty() {
        phantom(width, height, 255.0)
    } else {
        ImageBuffer::from_u8(width, height, pixels).map_err(js)?
    };
    compress(&img, fraction).map_err(js)
}
