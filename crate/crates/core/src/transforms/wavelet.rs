//! Orthonormal separable 2-D Daubechies wavelet transform with periodic
//! boundaries.
//!
//! Coefficient vectors use a fixed layout: the coarsest approximation band
//! `LL_L` first, then for each level from coarsest to finest the `HL`
//! (horizontal highpass), `LH` (vertical highpass) and `HH` bands. Every
//! band is stored row-major. With `L` levels on a `w × h` image, level `l`
//! bands are `(w / 2^l) × (h / 2^l)`.

use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::transforms::image::ImageBuffer;

/// Daubechies scaling filter with 8 vanishing moments (16 taps).
const DB8_LOWPASS: [f64; 16] = [
    0.054_415_842_243_104_01,
    0.312_871_590_914_299_95,
    0.675_630_736_297_289_8,
    0.585_354_683_654_206_7,
    -0.015_829_105_256_349_306,
    -0.284_015_542_961_546_9,
    0.000_472_484_573_913_282_8,
    0.128_747_426_620_478_47,
    -0.017_369_301_001_807_547,
    -0.044_088_253_930_794_755,
    0.013_981_027_917_398_282,
    0.008_746_094_047_405_777,
    -0.004_870_352_993_451_574,
    -0.000_391_740_373_376_947_05,
    0.000_675_449_406_450_569_3,
    -0.000_117_476_784_124_769_53,
];

/// Haar filter, kept for small hand-checkable cases.
const HAAR_LOWPASS: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    pub vanishing_moments: usize,
    pub levels: usize,
}

impl Default for WaveletSpec {
    /// Daubechies, 8 vanishing moments, 3 levels.
    fn default() -> Self {
        Self {
            vanishing_moments: 8,
            levels: 3,
        }
    }
}

impl WaveletSpec {
    pub fn lowpass(&self) -> Result<&'static [f64]> {
        match self.vanishing_moments {
            1 => Ok(&HAAR_LOWPASS),
            8 => Ok(&DB8_LOWPASS),
            v => Err(Error::InvalidOption(format!(
                "unsupported Daubechies order: {v} vanishing moments"
            ))),
        }
    }
}

/// The transform bound to one image size.
///
/// As a [`LinearOperator`] it is the synthesis map (coefficients → pixels);
/// its adjoint is the analysis map.
#[derive(Debug, Clone)]
pub struct Wavelet2d {
    width: usize,
    height: usize,
    levels: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Wavelet2d {
    pub fn new(width: usize, height: usize, spec: WaveletSpec) -> Result<Self> {
        let lo = spec.lowpass()?.to_vec();
        let min = 1usize << spec.levels;
        for (name, d) in [("width", width), ("height", height)] {
            if !d.is_power_of_two() || d < min.max(8) {
                return Err(Error::Image(format!(
                    "{name} {d} must be a power of two and at least {}",
                    min.max(8)
                )));
            }
        }
        let len = lo.len();
        let hi = (0..len)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 } * lo[len - 1 - t])
            .collect();
        Ok(Self {
            width,
            height,
            levels: spec.levels,
            lo,
            hi,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of leading coefficients that belong to the approximation band.
    pub fn approximation_len(&self) -> usize {
        (self.width >> self.levels) * (self.height >> self.levels)
    }

    fn analyze_1d(&self, input: &[f64], out: &mut [f64]) {
        let n = input.len();
        let half = n / 2;
        for k in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for (t, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = input[(2 * k + t) % n];
                a += l * v;
                d += h * v;
            }
            out[k] = a;
            out[half + k] = d;
        }
    }

    fn synthesize_1d(&self, input: &[f64], out: &mut [f64]) {
        let n = input.len();
        let half = n / 2;
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..half {
            let (a, d) = (input[k], input[half + k]);
            for (t, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
                out[(2 * k + t) % n] += l * a + h * d;
            }
        }
    }

    /// Applies a 1-D map to every row and then every column of the top-left
    /// `rows × cols` region of a row-major buffer with stride `width`.
    fn separable(
        &self,
        buf: &mut [f64],
        rows: usize,
        cols: usize,
        rows_first: bool,
        f: impl Fn(&Self, &[f64], &mut [f64]),
    ) {
        let w = self.width;
        let mut tmp_in = vec![0.0; rows.max(cols)];
        let mut tmp_out = vec![0.0; rows.max(cols)];
        let do_rows = |buf: &mut [f64], tmp_out: &mut [f64]| {
            for r in 0..rows {
                let line = &mut buf[r * w..r * w + cols];
                f(self, line, &mut tmp_out[..cols]);
                line.copy_from_slice(&tmp_out[..cols]);
            }
        };
        let do_cols = |buf: &mut [f64], tmp_in: &mut [f64], tmp_out: &mut [f64]| {
            for c in 0..cols {
                for r in 0..rows {
                    tmp_in[r] = buf[r * w + c];
                }
                f(self, &tmp_in[..rows], &mut tmp_out[..rows]);
                for r in 0..rows {
                    buf[r * w + c] = tmp_out[r];
                }
            }
        };
        if rows_first {
            do_rows(buf, &mut tmp_out);
            do_cols(buf, &mut tmp_in, &mut tmp_out);
        } else {
            do_cols(buf, &mut tmp_in, &mut tmp_out);
            do_rows(buf, &mut tmp_out);
        }
    }

    /// Pairs of (offset in Mallat layout buffer, band rows, band cols) in
    /// coefficient-vector order.
    fn bands(&self) -> Vec<(usize, usize, usize, usize)> {
        let (w, h, lv) = (self.width, self.height, self.levels);
        let mut out = vec![(0, 0, h >> lv, w >> lv)];
        for l in (1..=lv).rev() {
            let (bh, bw) = (h >> l, w >> l);
            out.push((0, bw, bh, bw)); // HL
            out.push((bh, 0, bh, bw)); // LH
            out.push((bh, bw, bh, bw)); // HH
        }
        out
    }

    fn mallat_to_vector(&self, buf: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(buf.len());
        for (r0, c0, bh, bw) in self.bands() {
            for r in r0..r0 + bh {
                out.extend_from_slice(&buf[r * self.width + c0..r * self.width + c0 + bw]);
            }
        }
        out
    }

    fn vector_to_mallat(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; coeffs.len()];
        let mut pos = 0;
        for (r0, c0, bh, bw) in self.bands() {
            for r in r0..r0 + bh {
                buf[r * self.width + c0..r * self.width + c0 + bw].copy_from_slice(&coeffs[pos..pos + bw]);
                pos += bw;
            }
        }
        buf
    }

    /// Pixels (row-major) → coefficient vector.
    pub fn forward(&self, pixels: &[f64], out: &mut [f64]) {
        let mut buf = pixels.to_vec();
        for l in 0..self.levels {
            self.separable(&mut buf, self.height >> l, self.width >> l, true, Self::analyze_1d);
        }
        out.copy_from_slice(&self.mallat_to_vector(&buf));
    }

    /// Coefficient vector → pixels (row-major).
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        let mut buf = self.vector_to_mallat(coeffs);
        for l in (0..self.levels).rev() {
            self.separable(&mut buf, self.height >> l, self.width >> l, false, Self::synthesize_1d);
        }
        out.copy_from_slice(&buf);
    }
}

impl LinearOperator for Wavelet2d {
    fn nrows(&self) -> usize {
        self.len()
    }
    fn ncols(&self) -> usize {
        self.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.inverse(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.forward(y, out)
    }
}

/// Analysis transform of an image.
pub fn dwt2(img: &ImageBuffer, spec: WaveletSpec) -> Result<Vec<f64>> {
    let wt = Wavelet2d::new(img.width, img.height, spec)?;
    let mut out = vec![0.0; wt.len()];
    wt.forward(&img.pixels, &mut out);
    Ok(out)
}

/// Synthesis transform; the inverse of [`dwt2`].
pub fn idwt2(coeffs: &[f64], width: usize, height: usize, peak: f64, spec: WaveletSpec) -> Result<ImageBuffer> {
    let wt = Wavelet2d::new(width, height, spec)?;
    if coeffs.len() != wt.len() {
        return Err(Error::Dimension {
            context: "wavelet coefficients",
            expected: wt.len(),
            got: coeffs.len(),
        });
    }
    let mut pixels = vec![0.0; wt.len()];
    wt.inverse(coeffs, &mut pixels);
    ImageBuffer::new(width, height, pixels, peak)
}
