//! PSNR and SSIM for colour images in `[0, 1]`.
//!
//! SSIM uses an 11-tap Gaussian window with sigma 1.5, `C1 = (0.01)^2`,
//! `C2 = (0.03)^2` (dynamic range 1), valid-region filtering only, and
//! averages the per-channel mean SSIM over the three channels.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, Image, MaskImage};

/// Value returned for identical inputs.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB over all pixels, or only those where
/// `region` is 1. Capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image, region: Option<&MaskImage>) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims(), "psnr operand")?;
    if let Some(r) = region {
        ensure_same_dims(a.dims(), r.dims(), "psnr region")?;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..a.width() * a.height() {
        if region.is_some_and(|r| !r.get_at(i)) {
            continue;
        }
        for (x, y) in a.pixel_at(i).into_iter().zip(b.pixel_at(i)) {
            let d = f64::from(x) - f64::from(y);
            sum += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(Error::Parameter("psnr region selects no pixels".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable valid-mode filter of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(j, t)| t * plane[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(j, t)| t * rows[(y + j) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims(), "ssim operand")?;
    let (w, h) = a.dims();
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::Parameter(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = (0..w * h).map(|i| f64::from(a.pixel_at(i)[c])).collect();
        let pb: Vec<f64> = (0..w * h).map(|i| f64::from(b.pixel_at(i)[c])).collect();
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let (mu_a, _, _) = filter_valid(&pa, w, h, &taps);
        let (mu_b, _, _) = filter_valid(&pb, w, h, &taps);
        let (e_aa, _, _) = filter_valid(&prod(&pa, &pa), w, h, &taps);
        let (e_bb, _, _) = filter_valid(&prod(&pb, &pb), w, h, &taps);
        let (e_ab, _, _) = filter_valid(&prod(&pa, &pb), w, h, &taps);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub scene: String,
    pub seed: u64,
    pub psnr_full: f64,
    pub psnr_masked: f64,
    pub ssim_full: f64,
    pub pixels_full: usize,
    pub pixels_masked: usize,
}

impl EvalReport {
    /// Compares `output` with `truth`; the masked PSNR covers `region` = 1.
    pub fn evaluate(output: &Image, truth: &Image, region: &MaskImage, scene: &str, seed: u64) -> Result<Self> {
        Ok(Self {
            scene: scene.to_string(),
            seed,
            psnr_full: psnr(output, truth, None)?,
            psnr_masked: psnr(output, truth, Some(region))?,
            ssim_full: ssim(output, truth)?,
            pixels_full: output.width() * output.height(),
            pixels_masked: region.count_ones(),
        })
    }

    /// Header line plus one row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self).expect("in-memory csv");
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scene {} (seed {})", self.scene, self.seed)?;
        writeln!(f, "  PSNR masked  {:.3} dB over {} px", self.psnr_masked, self.pixels_masked)?;
        writeln!(f, "  PSNR full    {:.3} dB over {} px", self.psnr_full, self.pixels_full)?;
        write!(f, "  SSIM full    {:.4}", self.ssim_full)
    }
}
