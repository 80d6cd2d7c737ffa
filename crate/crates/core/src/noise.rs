//! Seeded salt-and-pepper corruption.
//!
//! The random stream is xoshiro256** seeded through SplitMix64 (the seeding
//! procedure recommended by the xoshiro authors). Each pixel, visited in
//! row-major order, consumes exactly one 64-bit output, mapped to a uniform
//! `f64` in `[0, 1)` by taking the top 53 bits times 2^-53.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::amf::NoiseMask;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Probability of a pixel becoming `s_min` (pepper).
    pub p: f64,
    /// Probability of a pixel becoming `s_max` (salt).
    pub q: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p: 0.0,
            q: 0.0,
            s_min: 0.0,
            s_max: 255.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    /// Symmetric salt and pepper with `p = q = ratio / 2`.
    pub fn with_ratio(ratio: f64, seed: u64) -> Self {
        Self {
            p: ratio / 2.0,
            q: ratio / 2.0,
            seed,
            ..Self::default()
        }
    }

    pub fn ratio(&self) -> f64 {
        self.p + self.q
    }

    pub fn validate(&self) -> Result<()> {
        let prob_ok = |x: f64| x.is_finite() && x >= 0.0;
        if !prob_ok(self.p) || !prob_ok(self.q) || self.p + self.q > 1.0 {
            return Err(Error::Config(format!(
                "noise probabilities p={} q={} must be nonnegative with p+q <= 1",
                self.p, self.q
            )));
        }
        let in_range = |x: f64| (0.0..=255.0).contains(&x);
        if !in_range(self.s_min) || !in_range(self.s_max) || self.s_min >= self.s_max {
            return Err(Error::Config(format!(
                "impulse values s_min={} s_max={} must satisfy 0 <= s_min < s_max <= 255",
                self.s_min, self.s_max
            )));
        }
        Ok(())
    }
}

/// Uniform stream used for corruption; exposed so other implementations can
/// check test vectors against it.
pub struct UniformStream(Xoshiro256StarStar);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Corrupts `img` and returns the noisy image plus the mask of overwritten
/// pixels. A pixel counts as overwritten even when its original value
/// already equaled the impulse value.
pub fn corrupt(img: &GrayImage, spec: &NoiseSpec) -> Result<(GrayImage, NoiseMask)> {
    spec.validate()?;
    let mut stream = UniformStream::new(spec.seed);
    let mut pixels = img.pixels().to_vec();
    let mut flags = vec![false; pixels.len()];
    let salt_threshold = spec.p + spec.q;
    for (px, flag) in pixels.iter_mut().zip(flags.iter_mut()) {
        let draw = stream.next_f64();
        if draw < spec.p {
            *px = spec.s_min;
            *flag = true;
        } else if draw < salt_threshold {
            *px = spec.s_max;
            *flag = true;
        }
    }
    let noisy = GrayImage::new(img.width(), img.height(), pixels)?;
    let mask = NoiseMask::from_flags(img.width(), img.height(), flags)?;
    Ok((noisy, mask))
}

/// Fraction of the image covered by the mask.
pub fn noise_ratio(mask: &NoiseMask) -> f64 {
    mask.count() as f64 / (mask.width() * mask.height()) as f64
}
