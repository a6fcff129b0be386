//! Grayscale raster storage and binary PGM (P5) input/output.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A grayscale image stored row-major, with the intensity that counts as
/// full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub peak: f64,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, peak: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                context: "image pixels",
                expected: width * height,
                got: pixels.len(),
            });
        }
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::Image(format!("peak must be positive, got {peak}")));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::Image("pixels must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            peak,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64, peak: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], peak)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Image(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.peak != other.peak {
            return Err(Error::Image(format!("peak mismatch: {} vs {}", self.peak, other.peak)));
        }
        Ok(())
    }

    pub fn clipped(&self) -> Self {
        let mut out = self.clone();
        out.pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, self.peak));
        out
    }

    /// Rounds to 8-bit levels in `[0, 255]`, scaling by `255 / peak`.
    pub fn to_u8(&self) -> Vec<u8> {
        let scale = 255.0 / self.peak;
        self.pixels
            .iter()
            .map(|p| (p * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&b| b as f64).collect(), 255.0)
    }

    /// Writes binary PGM with maxval 255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Image(e.to_string());
        write!(w, "P5\n{} {}\n255\n", self.width, self.height).map_err(io)?;
        w.write_all(&self.to_u8()).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Reads binary PGM with maxval 255. The result has peak 255.
    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::Image(e.to_string()))?;
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // whitespace and comments between header fields
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Image("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(Error::Image(format!("expected P5 magic, found {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Image(format!("bad PGM header field '{s}'")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Image(format!("only maxval 255 is supported, got {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height;
        if bytes.len() < pos + need {
            return Err(Error::Image("truncated PGM raster".into()));
        }
        Self::from_u8(width, height, &bytes[pos..pos + need])
    }
}

/// A piecewise-constant test image: a mid-gray background with a bright
/// disk, a dark rectangle, a brighter inner disk and a thin bar. Intensities
/// lie in `[0.2, 0.9] · peak`.
pub fn phantom(width: usize, height: usize, peak: f64) -> ImageBuffer {
    let (w, h) = (width as f64, height as f64);
    let mut pixels = vec![0.45 * peak; width * height];
    for r in 0..height {
        for c in 0..width {
            let (x, y) = ((c as f64 + 0.5) / w, (r as f64 + 0.5) / h);
            let mut v = 0.45;
            let disk = (x - 0.38).powi(2) + (y - 0.42).powi(2);
            if disk < 0.22f64.powi(2) {
                v = 0.8;
            }
            if disk < 0.09f64.powi(2) {
                v = 0.9;
            }
            if (0.62..0.88).contains(&x) && (0.55..0.85).contains(&y) {
                v = 0.2;
            }
            if (0.1..0.9).contains(&x) && (0.08..0.14).contains(&y) {
                v = 0.65;
            }
            pixels[r * width + c] = v * peak;
        }
    }
    ImageBuffer {
        width,
        height,
        pixels,
        peak,
    }
}
