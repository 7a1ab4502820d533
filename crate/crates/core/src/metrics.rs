//! Image quality scores for intensities in [0, 1].

use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio `10·log10(1/MSE)` in dB. Identical images give `+∞`.
pub fn psnr(x: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    reference.ensure_same_shape(x)?;
    if x.is_empty() {
        return Err(PnpError::Config("psnr of an empty image".into()));
    }
    let mse = x.distance(reference).powi(2) / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let t = i as f64 - c;
        *v = (-t * t / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

// Separable Gaussian filter, keeping only fully covered positions.
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..SSIM_WINDOW).map(|k| win[k] * src[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|k| win[k] * tmp[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03` and dynamic range 1.
pub fn ssim(x: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    reference.ensure_same_shape(x)?;
    let (h, w) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(PnpError::Config(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let a = x.data();
    let b = reference.data();
    let sq = |f: &dyn Fn(usize) -> f64| (0..a.len()).map(f).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, h, w, &win);
    let mu_b = filter_valid(b, h, w, &win);
    let aa = filter_valid(&sq(&|i| a[i] * a[i]), h, w, &win);
    let bb = filter_valid(&sq(&|i| b[i] * b[i]), h, w, &win);
    let ab = filter_valid(&sq(&|i| a[i] * b[i]), h, w, &win);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_reference_values() {
        let r = ImageGrid::from_fn(8, 8, |i, j| ((i + j) % 3) as f64 / 4.0);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        assert!((psnr(&r.map(|v| v + 0.1), &r).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&r.map(|v| v - 0.01), &r).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&ImageGrid::zeros(2, 2), &ImageGrid::zeros(2, 3)).is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let checker = ImageGrid::from_fn(16, 16, |i, j| if (i + j) % 2 == 0 { 0.8 } else { 0.2 });
        assert!((ssim(&checker, &checker).unwrap() - 1.0).abs() < 1e-12);
        let inverted = checker.map(|v| 1.0 - v);
        assert!(ssim(&inverted, &checker).unwrap() < 0.0);
        let flat = ImageGrid::filled(12, 12, 0.3);
        assert!((ssim(&flat, &flat).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&ImageGrid::zeros(10, 20), &ImageGrid::zeros(10, 20)).is_err());
    }

    #[test]
    fn ssim_bounded() {
        let a = ImageGrid::from_fn(20, 20, |i, j| ((i * 7 + j * 13) % 11) as f64 / 10.0);
        let b = ImageGrid::from_fn(20, 20, |i, j| ((i * 3 + j * 5) % 7) as f64 / 6.0);
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
    }
}
