//! Forward finite-difference analysis operators.

use crate::linalg::LinearOperator;

/// Anisotropic total-variation operator on a `width × height` image.
///
/// Rows are all horizontal differences `p[i][j+1] − p[i][j]` (row-major,
/// `height · (width − 1)` of them) followed by all vertical differences
/// `p[i+1][j] − p[i][j]` (`(height − 1) · width`). No periodic wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TvOperator {
    pub width: usize,
    pub height: usize,
}

pub fn tv_rows(width: usize, height: usize) -> TvOperator {
    TvOperator { width, height }
}

impl TvOperator {
    pub fn horizontal_len(&self) -> usize {
        self.height * self.width.saturating_sub(1)
    }
}

impl LinearOperator for TvOperator {
    fn nrows(&self) -> usize {
        self.horizontal_len() + self.width * self.height.saturating_sub(1)
    }

    fn ncols(&self) -> usize {
        self.width * self.height
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let mut k = 0;
        for i in 0..h {
            for j in 0..w - 1 {
                out[k] = x[i * w + j + 1] - x[i * w + j];
                k += 1;
            }
        }
        for i in 0..h - 1 {
            for j in 0..w {
                out[k] = x[(i + 1) * w + j] - x[i * w + j];
                k += 1;
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut k = 0;
        for i in 0..h {
            for j in 0..w - 1 {
                out[i * w + j + 1] += y[k];
                out[i * w + j] -= y[k];
                k += 1;
            }
        }
        for i in 0..h - 1 {
            for j in 0..w {
                out[(i + 1) * w + j] += y[k];
                out[i * w + j] -= y[k];
                k += 1;
            }
        }
    }
}

/// 1-D forward differences `x[i+1] − x[i]`, an `(n − 1) × n` operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstDifference {
    n: usize,
}

impl FirstDifference {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LinearOperator for FirstDifference {
    fn nrows(&self) -> usize {
        self.n.saturating_sub(1)
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(x.windows(2)) {
            *o = w[1] - w[0];
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &v) in y.iter().enumerate() {
            out[i + 1] += v;
            out[i] -= v;
        }
    }
}
