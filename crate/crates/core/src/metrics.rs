//! Mean squared error and PSNR against a reference image.

use crate::error::{Error, Result};
use crate::image::{GrayImage, MAX_INTENSITY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    /// `f64::INFINITY` when the images are identical.
    pub psnr_db: f64,
    pub peak_val: f64,
}

impl QualityReport {
    pub fn measure(reference: &GrayImage, test: &GrayImage, peak_val: f64) -> Result<Self> {
        let mse = mse(reference, test)?;
        Ok(Self {
            mse,
            psnr_db: psnr_from_mse(mse, peak_val),
            peak_val,
        })
    }
}

pub fn mse(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    if reference.dims() != test.dims() {
        return Err(Error::dims(reference.dims(), test.dims()));
    }
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

pub fn psnr_from_mse(mse: f64, peak_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak_val * peak_val / mse).log10()
    }
}

/// `10 log10(peak^2 / mse)` in dB.
pub fn psnr(reference: &GrayImage, test: &GrayImage, peak_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference, test)?, peak_val))
}

/// PSNR with the 8-bit peak of 255.
pub fn psnr_8bit(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    psnr(reference, test, MAX_INTENSITY)
}
