//! Grayscale pixel grids, 4-neighborhoods and Netpbm I/O.
//!
//! Intensities are stored as `f64` in `[0, 255]`; they are quantized to bytes
//! only when an image is written out. Indexing is 0-based and row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_INTENSITY: f64 = 255.0;

/// A pixel location, `row` in `0..height` and `col` in `0..width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<(usize, usize)> for PixelCoord {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// Dense single-channel image with real-valued intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major pixels, rejecting values outside `[0, 255]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: format!("{} pixels", width * height),
                got: format!("{} pixels", pixels.len()),
            });
        }
        if let Some((idx, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=MAX_INTENSITY).contains(*v))
        {
            return Err(Error::Config(format!(
                "pixel {idx} has intensity {v} outside [0, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn offset(&self, c: PixelCoord) -> usize {
        c.row * self.width + c.col
    }

    #[inline]
    pub fn coord(&self, offset: usize) -> PixelCoord {
        PixelCoord::new(offset / self.width, offset % self.width)
    }

    pub fn contains(&self, c: PixelCoord) -> bool {
        c.row < self.height && c.col < self.width
    }

    #[inline]
    pub fn get(&self, c: PixelCoord) -> f64 {
        self.pixels[self.offset(c)]
    }

    /// Writes a pixel, clamping into `[0, 255]`. NaN is stored as 0.
    #[inline]
    pub fn set_clamped(&mut self, c: PixelCoord, value: f64) {
        let idx = self.offset(c);
        self.pixels[idx] = clamp_intensity(value);
    }

    /// Round-half-up quantization to bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    /// The image after a round trip through 8-bit storage.
    pub fn quantized(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f64::from(quantize(v))).collect(),
        }
    }

    pub fn neighborhood(&self, c: PixelCoord) -> Result<Vec<PixelCoord>> {
        neighborhood(c, self.dims())
    }
}

pub fn clamp_intensity(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, MAX_INTENSITY)
    }
}

/// Round half up, clamp to `0..=255`.
pub fn quantize(v: f64) -> u8 {
    (clamp_intensity(v) + 0.5).floor().min(MAX_INTENSITY) as u8
}

/// The 4-neighbors of `c` that lie inside a `(height, width)` grid, in the
/// order left, right, up, down.
pub fn neighborhood(c: PixelCoord, dims: (usize, usize)) -> Result<Vec<PixelCoord>> {
    let (height, width) = dims;
    if c.row >= height || c.col >= width {
        return Err(Error::OutOfBounds {
            row: c.row,
            col: c.col,
            height,
            width,
        });
    }
    let mut out = Vec::with_capacity(4);
    if c.col > 0 {
        out.push(PixelCoord::new(c.row, c.col - 1));
    }
    if c.col + 1 < width {
        out.push(PixelCoord::new(c.row, c.col + 1));
    }
    if c.row > 0 {
        out.push(PixelCoord::new(c.row - 1, c.col));
    }
    if c.row + 1 < height {
        out.push(PixelCoord::new(c.row + 1, c.col));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// PGM

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn uint(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

/// Parses a binary (P5) or ASCII (P2) graymap with maxval 255.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(Error::parse(0, "missing 'P' magic"));
    }
    let binary = match data[1] {
        b'5' => true,
        b'2' => false,
        other => {
            return Err(Error::parse(
                1,
                format!("unsupported netpbm variant P{}", other as char),
            ))
        }
    };
    let mut rd = HeaderReader { data, pos: 2 };
    let width = rd.uint("width")?;
    let height = rd.uint("height")?;
    rd.skip_space_and_comments();
    let maxval_at = rd.pos;
    let maxval = rd.uint("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(
            maxval_at,
            format!("maxval {maxval} unsupported, expected 255"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(2, "zero image dimension"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(2, "image dimensions overflow"))?;

    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        match data.get(rd.pos) {
            Some(b) if b.is_ascii_whitespace() => rd.pos += 1,
            _ => return Err(Error::parse(rd.pos, "expected whitespace after maxval")),
        }
        let payload = &data[rd.pos..];
        if payload.len() < count {
            return Err(Error::parse(
                data.len(),
                format!("truncated raster: {} of {count} bytes", payload.len()),
            ));
        }
        payload[..count].iter().map(|&b| f64::from(b)).collect()
    } else {
        let mut px = Vec::with_capacity(count);
        for _ in 0..count {
            let at = rd.pos;
            let v = match rd.uint("pixel value") {
                Ok(v) => v,
                Err(_) if at >= data.len() || rd.pos >= data.len() => {
                    return Err(Error::parse(
                        data.len(),
                        format!("truncated raster: {} of {count} values", px.len()),
                    ))
                }
                Err(e) => return Err(e),
            };
            if v > 255 {
                return Err(Error::parse(at, format!("pixel value {v} exceeds maxval")));
            }
            px.push(v as f64);
        }
        px
    };
    GrayImage::new(width, height, pixels)
}

/// Serializes as binary P5 with header `P5\n<w> <h>\n255\n`.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let data = fs::read(path)?;
    decode_pgm(&data)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pc(r: usize, c: usize) -> PixelCoord {
        PixelCoord::new(r, c)
    }

    #[test]
    fn neighborhood_interior_corner_edge() {
        let d = (10, 10);
        assert_eq!(
            neighborhood(pc(5, 5), d).unwrap(),
            vec![pc(5, 4), pc(5, 6), pc(4, 5), pc(6, 5)]
        );
        assert_eq!(neighborhood(pc(0, 0), d).unwrap(), vec![pc(0, 1), pc(1, 0)]);
        assert_eq!(
            neighborhood(pc(0, 5), d).unwrap(),
            vec![pc(0, 4), pc(0, 6), pc(1, 5)]
        );
    }

    #[test]
    fn neighborhood_rejects_out_of_bounds() {
        assert!(matches!(
            neighborhood(pc(10, 0), (10, 10)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn neighborhood_symmetric_and_sized() {
        for (h, w) in [(1, 1), (1, 5), (2, 3), (4, 4), (5, 3)] {
            for r in 0..h {
                for c in 0..w {
                    let p = pc(r, c);
                    let nb = neighborhood(p, (h, w)).unwrap();
                    let interior = r > 0 && c > 0 && r + 1 < h && c + 1 < w;
                    assert_eq!(nb.len() == 4, interior);
                    if h >= 2 && w >= 2 {
                        assert!((2..=4).contains(&nb.len()));
                    }
                    for q in &nb {
                        assert!(neighborhood(*q, (h, w)).unwrap().contains(&p));
                    }
                    // and nothing outside the list claims p as a neighbor
                    for r2 in 0..h {
                        for c2 in 0..w {
                            let q = pc(r2, c2);
                            if neighborhood(q, (h, w)).unwrap().contains(&p) {
                                assert!(nb.contains(&q));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn encode_two_by_two() {
        let img = GrayImage::new(2, 2, vec![0.0, 255.0, 128.0, 7.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..bytes.len() - 4], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 7]);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.49), 0);
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(127.5), 128);
        assert_eq!(quantize(254.6), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.0), 255);
    }

    #[test]
    fn ascii_pgm_accepted() {
        let img = decode_pgm(b"P2\n# comment\n3 1\n255\n0 17\n255\n").unwrap();
        assert_eq!(img.pixels(), &[0.0, 17.0, 255.0]);
        let p5 = encode_pgm(&img);
        assert!(p5.starts_with(b"P5\n"));
    }

    #[test]
    fn header_comments_skipped() {
        let img = decode_pgm(b"P5 # hi\n1 # w\n1\n255\n\x2a").unwrap();
        assert_eq!(img.pixels(), &[42.0]);
    }

    #[test]
    fn malformed_inputs() {
        let err = decode_pgm(b"P6\n1 1\n255\n\0\0\0").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 1, .. }));
        let err = decode_pgm(b"P5\n2 2\n65535\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 7, .. }), "{err}");
        let err = decode_pgm(b"P5\n2 2\n255\n\x01\x02").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 13, .. }), "{err}");
        let err = decode_pgm(b"P5\nx 2\n255\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 3, .. }), "{err}");
        assert!(decode_pgm(b"P2\n2 1\n255\n4").is_err());
        assert!(decode_pgm(b"P2\n1 1\n255\n256").is_err());
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::new(3, 2, vec![1.0, 2.4, 2.5, 254.5, 0.0, 99.0]).unwrap();
        save_pgm(&img, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(back.pixels(), &[1.0, 2.0, 3.0, 255.0, 0.0, 99.0]);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(GrayImage::new(2, 1, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let mut s = seed;
            let bytes: Vec<u8> = (0..w * h)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 56) as u8
                })
                .collect();
            let img = GrayImage::from_bytes(w, h, &bytes).unwrap();
            let file = encode_pgm(&img);
            let back = decode_pgm(&file).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pgm(&back), file);
        }
    }
}
