//! Phase one: adaptive median detection of impulse pixels.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, PixelCoord};

const NOT_FLAGGED: usize = usize::MAX;

/// The candidate set of corrupted pixels.
///
/// `index` lists flagged pixels in row-major order; position in that list is
/// the ordinal used by every vector and matrix defined over the noisy set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
    index: Vec<PixelCoord>,
    ordinals: Vec<usize>,
}

impl NoiseMask {
    pub fn from_flags(width: usize, height: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != width * height {
            return Err(Error::Dimension {
                expected: format!("{} flags", width * height),
                got: format!("{} flags", flags.len()),
            });
        }
        let mut index = Vec::new();
        let mut ordinals = vec![NOT_FLAGGED; flags.len()];
        for (off, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
            ordinals[off] = index.len();
            index.push(PixelCoord::new(off / width, off % width));
        }
        Ok(Self {
            width,
            height,
            flags,
            index,
            ordinals,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_flags(width, height, vec![false; width * height])
            .expect("flag count matches dimensions")
    }

    /// Mask of the given coordinates. Duplicates are ignored.
    pub fn from_coords(width: usize, height: usize, coords: &[PixelCoord]) -> Result<Self> {
        let mut flags = vec![false; width * height];
        for c in coords {
            if c.row >= height || c.col >= width {
                return Err(Error::OutOfBounds {
                    row: c.row,
                    col: c.col,
                    height,
                    width,
                });
            }
            flags[c.row * width + c.col] = true;
        }
        Self::from_flags(width, height, flags)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// `|N|`.
    pub fn count(&self) -> usize {
        self.index.len()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn index(&self) -> &[PixelCoord] {
        &self.index
    }

    #[inline]
    pub fn is_flagged(&self, c: PixelCoord) -> bool {
        self.flags[c.row * self.width + c.col]
    }

    /// Position of `c` in [`NoiseMask::index`], or `None` if unflagged.
    #[inline]
    pub fn index_of(&self, c: PixelCoord) -> Option<usize> {
        match self.ordinals[c.row * self.width + c.col] {
            NOT_FLAGGED => None,
            k => Some(k),
        }
    }

    /// Fraction of `truth` that this mask also flags. An empty `truth` has recall 1.
    pub fn recall_against(&self, truth: &NoiseMask) -> f64 {
        if truth.count() == 0 {
            return 1.0;
        }
        let hits = truth.index.iter().filter(|c| self.is_flagged(**c)).count();
        hits as f64 / truth.count() as f64
    }

    /// Binary PBM (P4), 1 bits for flagged pixels, rows padded to whole bytes.
    pub fn encode_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let row_bytes = self.width.div_ceil(8);
        for row in self.flags.chunks(self.width) {
            let mut packed = vec![0u8; row_bytes];
            for (col, _) in row.iter().enumerate().filter(|(_, f)| **f) {
                packed[col / 8] |= 0x80 >> (col % 8);
            }
            out.extend(packed);
        }
        out
    }

    /// Writes `path` as PBM and `<path>.txt` containing `count=<|N|>`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::File::create(path)?.write_all(&self.encode_pbm())?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".txt");
        fs::write(sidecar, format!("count={}\n", self.count()))?;
        Ok(())
    }
}

/// Mask lookup by coordinate; `None` for clean pixels.
pub fn mask_index_of(mask: &NoiseMask, c: PixelCoord) -> Option<usize> {
    mask.index_of(c)
}

pub const DEFAULT_W_MAX: usize = 39;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmfConfig {
    /// Largest window side; odd, at least 3.
    pub w_max: usize,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for AmfConfig {
    fn default() -> Self {
        Self {
            w_max: DEFAULT_W_MAX,
            s_min: 0.0,
            s_max: 255.0,
        }
    }
}

impl AmfConfig {
    /// Default configuration with `w_max` shrunk to the largest odd side that
    /// fits inside the image.
    pub fn fitted(dims: (usize, usize)) -> Self {
        let side = dims.0.min(dims.1);
        let fit = if side % 2 == 1 { side } else { side.saturating_sub(1) };
        Self {
            w_max: DEFAULT_W_MAX.min(fit.max(3)),
            ..Self::default()
        }
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        let side = dims.0.min(dims.1);
        if self.w_max < 3 || self.w_max % 2 == 0 {
            return Err(Error::Config(format!(
                "w_max must be an odd integer >= 3, got {}",
                self.w_max
            )));
        }
        if self.w_max > side {
            return Err(Error::Config(format!(
                "w_max {} exceeds the smaller image side {side}",
                self.w_max
            )));
        }
        if self.s_min >= self.s_max {
            return Err(Error::Config(format!(
                "s_min {} must be below s_max {}",
                self.s_min, self.s_max
            )));
        }
        Ok(())
    }

    fn is_impulse(&self, v: f64) -> bool {
        v == self.s_min || v == self.s_max
    }
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Median of the first window (3x3 up to `w_max`) around `c` whose median is
/// strictly between the impulse values, if any.
fn interior_median(img: &GrayImage, c: PixelCoord, cfg: &AmfConfig, buf: &mut Vec<f64>) -> Option<f64> {
    let (height, width) = img.dims();
    let mut half = 1;
    while 2 * half + 1 <= cfg.w_max {
        let r0 = c.row.saturating_sub(half);
        let r1 = (c.row + half).min(height - 1);
        let c0 = c.col.saturating_sub(half);
        let c1 = (c.col + half).min(width - 1);
        buf.clear();
        for r in r0..=r1 {
            let row = &img.pixels()[r * width..(r + 1) * width];
            buf.extend_from_slice(&row[c0..=c1]);
        }
        let med = median(buf);
        if cfg.s_min < med && med < cfg.s_max {
            return Some(med);
        }
        half += 1;
    }
    None
}

/// Runs the adaptive median filter.
///
/// Pixels whose value equals `s_min` or `s_max` are flagged. For each flagged
/// pixel the window grows from 3x3 until its median lies strictly between the
/// impulse values; that median becomes the pixel's initial estimate. If no
/// window up to `w_max` qualifies the pixel keeps its value. Unflagged pixels
/// are copied unchanged. Windows are clipped to the image.
pub fn adaptive_median(img: &GrayImage, cfg: &AmfConfig) -> Result<(NoiseMask, GrayImage)> {
    cfg.validate(img.dims())?;
    let flags: Vec<bool> = img.pixels().iter().map(|&v| cfg.is_impulse(v)).collect();
    let mask = NoiseMask::from_flags(img.width(), img.height(), flags)?;
    let mut u0 = img.clone();
    let mut buf = Vec::with_capacity(cfg.w_max * cfg.w_max);
    for &c in mask.index() {
        if let Some(med) = interior_median(img, c, cfg, &mut buf) {
            u0.set_clamped(c, med);
        }
    }
    Ok((mask, u0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{corrupt, NoiseSpec};

    #[test]
    fn constant_image_untouched() {
        let img = GrayImage::filled(9, 9, 128.0).unwrap();
        let (mask, u0) = adaptive_median(&img, &AmfConfig::fitted(img.dims())).unwrap();
        assert_eq!(mask.count(), 0);
        assert_eq!(u0, img);
    }

    #[test]
    fn single_salt_pixel_replaced_by_median() {
        let mut img = GrayImage::filled(5, 5, 128.0).unwrap();
        img.set_clamped(PixelCoord::new(2, 2), 255.0);
        let cfg = AmfConfig { w_max: 5, ..AmfConfig::default() };
        let (mask, u0) = adaptive_median(&img, &cfg).unwrap();
        assert_eq!(mask.index(), &[PixelCoord::new(2, 2)]);
        assert_eq!(u0.get(PixelCoord::new(2, 2)), 128.0);
    }

    #[test]
    fn window_grows_until_median_is_interior() {
        // 7x7 of 60, the center 3x3 block all salt: 3x3 median is 255,
        // 5x5 has 16 clean of 25 so its median is 60
        let mut img = GrayImage::filled(7, 7, 60.0).unwrap();
        for r in 2..5 {
            for c in 2..5 {
                img.set_clamped(PixelCoord::new(r, c), 255.0);
            }
        }
        let cfg = AmfConfig { w_max: 7, ..AmfConfig::default() };
        let (mask, u0) = adaptive_median(&img, &cfg).unwrap();
        assert_eq!(mask.count(), 9);
        assert_eq!(u0.get(PixelCoord::new(3, 3)), 60.0);
    }

    #[test]
    fn no_interior_median_keeps_value() {
        let mut img = GrayImage::filled(3, 3, 0.0).unwrap();
        img.set_clamped(PixelCoord::new(0, 0), 90.0);
        let cfg = AmfConfig { w_max: 3, ..AmfConfig::default() };
        let (mask, u0) = adaptive_median(&img, &cfg).unwrap();
        assert_eq!(mask.count(), 8);
        assert_eq!(u0.get(PixelCoord::new(1, 1)), 0.0);
        assert_eq!(u0.get(PixelCoord::new(0, 0)), 90.0);
    }

    #[test]
    fn even_window_median_is_mean_of_middle_pair() {
        // corner pixel sees the clipped 2x2 window {255, 10, 20, 30}
        let img = GrayImage::new(3, 3, vec![255.0, 10.0, 90.0, 20.0, 30.0, 90.0, 90.0, 90.0, 90.0])
            .unwrap();
        let cfg = AmfConfig { w_max: 3, ..AmfConfig::default() };
        let (_, u0) = adaptive_median(&img, &cfg).unwrap();
        assert_eq!(u0.get(PixelCoord::new(0, 0)), 25.0);
    }

    #[test]
    fn config_validation() {
        let img = GrayImage::filled(10, 10, 1.0).unwrap();
        for w in [1, 4, 11] {
            let cfg = AmfConfig { w_max: w, ..AmfConfig::default() };
            assert!(matches!(adaptive_median(&img, &cfg), Err(Error::Config(_))));
        }
        assert_eq!(AmfConfig::fitted((10, 12)).w_max, 9);
        assert_eq!(AmfConfig::fitted((600, 512)).w_max, 39);
    }

    #[test]
    fn mask_ordinals() {
        let coords = [PixelCoord::new(2, 1), PixelCoord::new(0, 3), PixelCoord::new(3, 3)];
        let mask = NoiseMask::from_coords(4, 4, &coords).unwrap();
        assert_eq!(mask.index(), &[coords[1], coords[0], coords[2]]);
        assert_eq!(mask_index_of(&mask, coords[1]), Some(0));
        assert_eq!(mask_index_of(&mask, coords[2]), Some(2));
        assert_eq!(mask_index_of(&mask, PixelCoord::new(0, 0)), None);
        assert_eq!(mask.flags().iter().filter(|f| **f).count(), mask.count());
    }

    #[test]
    fn pbm_encoding() {
        let mask = NoiseMask::from_coords(10, 2, &[PixelCoord::new(0, 0), PixelCoord::new(1, 9)])
            .unwrap();
        let bytes = mask.encode_pbm();
        assert!(bytes.starts_with(b"P4\n10 2\n"));
        assert_eq!(&bytes[8..], &[0x80, 0x00, 0x00, 0x40]);
    }

    #[test]
    fn flagged_pixels_are_extremes_and_clean_pixels_unchanged() {
        let px = (0..40 * 40).map(|i| (1 + (i * 13) % 253) as f64).collect();
        let img = GrayImage::new(40, 40, px).unwrap();
        let (noisy, truth) = corrupt(&img, &NoiseSpec::with_ratio(0.5, 3)).unwrap();
        let (mask, u0) = adaptive_median(&noisy, &AmfConfig::fitted(noisy.dims())).unwrap();
        for i in 0..noisy.len() {
            let c = noisy.coord(i);
            if mask.is_flagged(c) {
                let v = noisy.get(c);
                assert!(v == 0.0 || v == 255.0);
            } else {
                assert_eq!(u0.get(c).to_bits(), noisy.get(c).to_bits());
            }
        }
        assert_eq!(mask.recall_against(&truth), 1.0);
    }

    #[test]
    fn recall_monotone_in_window() {
        let px = (0..64 * 64).map(|i| (1 + (i * 31) % 253) as f64).collect();
        let img = GrayImage::new(64, 64, px).unwrap();
        let (noisy, truth) = corrupt(&img, &NoiseSpec::with_ratio(0.7, 11)).unwrap();
        let small = AmfConfig { w_max: 7, ..AmfConfig::default() };
        let large = AmfConfig { w_max: 39, ..AmfConfig::default() };
        let (m7, _) = adaptive_median(&noisy, &small).unwrap();
        let (m39, _) = adaptive_median(&noisy, &large).unwrap();
        assert!(m39.recall_against(&truth) >= m7.recall_against(&truth));
    }
}
