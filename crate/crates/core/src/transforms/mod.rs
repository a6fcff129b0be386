//! Sparsifying transforms, image containers and image-quality metrics.

pub mod image;
pub mod metrics;
pub mod tv;
pub mod wavelet;

pub use image::ImageBuffer;
pub use metrics::{psnr, ssim};
pub use tv::{tv_rows, FirstDifference, TvOperator};
pub use wavelet::{dwt2, idwt2, Wavelet2d, WaveletSpec};
