//! Full-reference image quality metrics.

use crate::error::{Error, Result};
use crate::transforms::image::ImageBuffer;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_shape(b)?;
    let sum: f64 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.pixels.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (a.peak * a.peak / m).log10())
}

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering, keeping only positions where the window
/// fits entirely inside the image.
fn filter_valid(data: &[f64], width: usize, height: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let ow = width - WINDOW + 1;
    let oh = height - WINDOW + 1;
    let mut rows = vec![0.0; height * ow];
    for r in 0..height {
        for c in 0..ow {
            rows[r * ow + c] = (0..WINDOW).map(|t| w[t] * data[r * width + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WINDOW).map(|t| w[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5) and
/// constants `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²`.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_shape(b)?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::Image(format!("SSIM needs images of at least {WINDOW}x{WINDOW}")));
    }
    let (w, h) = (a.width, a.height);
    let win = gaussian_window();
    let c1 = (0.01 * a.peak).powi(2);
    let c2 = (0.03 * a.peak).powi(2);
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(&a.pixels, w, h, &win);
    let mu_b = filter_valid(&b.pixels, w, h, &win);
    let aa = filter_valid(&prod(&|x, _| x * x), w, h, &win);
    let bb = filter_valid(&prod(&|_, y| y * y), w, h, &win);
    let ab = filter_valid(&prod(&|x, y| x * y), w, h, &win);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn psnr_closed_forms() {
        let a = ImageBuffer::filled(16, 16, 100.0, 255.0).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = ImageBuffer::filled(16, 16, 116.0, 255.0).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 24.0484).abs() < 1e-4);

        let c = ImageBuffer::filled(4, 4, 0.5, 1.0).unwrap();
        let d = ImageBuffer::filled(4, 4, 0.6, 1.0).unwrap();
        assert!((psnr(&c, &d).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn ssim_closed_forms() {
        let a = ImageBuffer::filled(16, 16, 100.0, 255.0).unwrap();
        let b = ImageBuffer::filled(16, 16, 120.0, 255.0).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let expected = (2.0 * 100.0 * 120.0 + 6.5025) / (100.0f64.powi(2) + 120.0f64.powi(2) + 6.5025);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.98361).abs() < 1e-5);
        let small = ImageBuffer::filled(8, 8, 1.0, 255.0).unwrap();
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = Normal::new(128.0, 30.0).unwrap();
        for _ in 0..5 {
            let a = ImageBuffer::new(24, 20, (0..480).map(|_| n.sample(&mut rng)).collect(), 255.0).unwrap();
            let b = ImageBuffer::new(24, 20, (0..480).map(|_| n.sample(&mut rng)).collect(), 255.0).unwrap();
            let s = ssim(&a, &b).unwrap();
            assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-14);
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn psnr_falls_as_noise_grows() {
        let clean = crate::transforms::image::phantom(32, 32, 255.0);
        let mut previous = f64::INFINITY;
        for sd in [5.0, 10.0, 20.0] {
            let mut mean = 0.0;
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = Normal::new(0.0, sd).unwrap();
                let mut noisy = clean.clone();
                noisy.pixels.iter_mut().for_each(|p| *p += n.sample(&mut rng));
                mean += psnr(&clean, &noisy).unwrap() / 10.0;
            }
            assert!(mean < previous);
            previous = mean;
        }
    }
}
