//! PSNR and SSIM on `[0, 1]` RGB images.

use crate::error::{Error, Result};
use crate::render::Image;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(1 / MSE)` in dB, capped at 100 dB when MSE < 1e-10.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let d = i as f64 - half;
        (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable "valid" filtering: output is `(h - 10) × (w - 10)`.
fn filter_valid(plane: &[f64], width: usize, height: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width + 1 - SSIM_WINDOW;
    let oh = height + 1 - SSIM_WINDOW;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[x + k];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).map(|v| *v as f64).collect()
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic
/// range 1) over valid window positions, averaged across the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(a.width, a.height));
    }
    let (w, h) = (a.width, a.height);
    let taps = gaussian_taps();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, w, h, &taps);
        let my = filter_valid(&y, w, h, &taps);
        let sxx = filter_valid(&xx, w, h, &taps);
        let syy = filter_valid(&yy, w, h, &taps);
        let sxy = filter_valid(&xy, w, h, &taps);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, v: f32) -> Image {
        Image::from_data(w, h, vec![v; w * h * 3]).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = constant(4, 4, 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert_eq!(psnr(&a, &constant(4, 4, 1.0)).unwrap(), 0.0);
        let b = constant(4, 4, 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let a = constant(4, 4, 0.0);
        let b = constant(4, 5, 0.0);
        assert!(matches!(psnr(&a, &b), Err(Error::ShapeMismatch(..))));
        assert!(matches!(ssim(&a, &b), Err(Error::ShapeMismatch(..))));
    }

    #[test]
    fn ssim_small_image() {
        let a = constant(10, 20, 0.5);
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall(10, 20))));
    }

    #[test]
    fn ssim_constant_images() {
        let a = constant(16, 16, 0.25);
        let b = constant(16, 16, 0.75);
        let c1 = 1e-4;
        let want = (2.0 * 0.25 * 0.75 + c1) / (0.25f64.powi(2) + 0.75f64.powi(2) + c1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn taps_sum_to_one() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
