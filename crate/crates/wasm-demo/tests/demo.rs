use nlsparse::transforms::image::phantom;
use nlsparse_wasm::{compress, phantom_pixels, run_denoise, success_curve};

#[test]
fn curve_has_one_rate_per_sparsity() {
    let rates = success_curve("identity", "omp", 20, 40, 4, 20, 1).unwrap();
    assert_eq!(rates.len(), 4);
    assert!(rates.iter().all(|r| (0.0..=1.0).contains(r)));
    assert_eq!(rates[0], 1.0);
    assert!(success_curve("cubic", "omp", 20, 40, 4, 20, 1).is_err());
}

#[test]
fn denoise_improves_phantom() {
    let d = run_denoise(&phantom(32, 32, 255.0), 12.0, "omp", 3).unwrap();
    assert_eq!(d.noisy().len(), 32 * 32);
    assert_eq!(d.denoised().len(), 32 * 32);
    assert!(d.output_psnr > d.input_psnr);
}

#[test]
fn compression_keeps_requested_count() {
    let img = phantom(64, 64, 255.0);
    let all = compress(&img, 1.0).unwrap();
    assert_eq!(all.kept, 64 * 64);
    // 8-bit rounding can flip intensities that sit exactly on a half level
    for (a, b) in all.pixels().iter().zip(phantom_pixels(64, 64)) {
        assert!(a.abs_diff(b) <= 1);
    }
    assert!(all.psnr > 100.0);
    let some = compress(&img, 0.05).unwrap();
    assert_eq!(some.kept, 205);
    assert!(some.psnr > 20.0 && some.psnr < all.psnr);
}
