//! Single-channel raster images and the PGM reader/writer feeding the
//! pipeline.
//!
//! Pixel intensities are kept as `f64` so intermediate results (luma
//! conversion, bilinear resampling, inverse transforms) do not quantize
//! until an image is written back to disk.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major single-channel image with real-valued intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl SpatialImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pixel values must be finite"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clamp every pixel into the displayable `[0, 255]` range.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
        self
    }
}

/// Convert equal-sized R/G/B planes to BT.601 luma.
pub fn rgb_to_luma(r: &SpatialImage, g: &SpatialImage, b: &SpatialImage) -> Result<SpatialImage> {
    for plane in [g, b] {
        if plane.width != r.width || plane.height != r.height {
            return Err(Error::DimensionMismatch(
                r.width,
                r.height,
                plane.width,
                plane.height,
            ));
        }
    }
    let data = r
        .data
        .iter()
        .zip(&g.data)
        .zip(&b.data)
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    SpatialImage::new(r.width, r.height, data)
}

/// 8-fold bilinear upsampling with a corner-aligned sample grid.
///
/// Output pixel `(i, j)` samples the input at
/// `(i * (h-1) / (8h-1), j * (w-1) / (8w-1))`, so the four image corners map
/// exactly onto the input corners.
pub fn upsample_8x(img: &SpatialImage) -> Result<SpatialImage> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::invalid(
            "upsample_8x requires width and height >= 2",
        ));
    }
    let (h, w) = (img.height, img.width);
    let (out_h, out_w) = (8 * h, 8 * w);
    let mut data = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = i as f64 * (h - 1) as f64 / (out_h - 1) as f64;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f64;
        for j in 0..out_w {
            let x = j as f64 * (w - 1) as f64 / (out_w - 1) as f64;
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f64;
            let a = img.at(y0, x0);
            let b = img.at(y0, x1);
            let c = img.at(y1, x0);
            let d = img.at(y1, x1);
            data.push((1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d));
        }
    }
    Ok(SpatialImage {
        width: out_w,
        height: out_h,
        data,
    })
}

/// Load a binary (P5) or plain (P2) PGM file with maxval <= 255.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<SpatialImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Parse PGM bytes. Exposed separately so in-memory data can be decoded.
pub fn parse_pgm(bytes: &[u8]) -> Result<SpatialImage> {
    let mut cursor = HeaderCursor::new(bytes);
    let magic = cursor.token()?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => {
            return Err(Error::PgmHeader(format!(
                "expected magic P5 or P2, found {other:?}"
            )))
        }
    };
    let width = cursor.unsigned("width")?;
    let height = cursor.unsigned("height")?;
    let maxval = cursor.unsigned("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::PgmHeader("zero width or height".into()));
    }
    if maxval > 255 {
        return Err(Error::PgmMaxval(maxval as u32));
    }
    if maxval == 0 {
        return Err(Error::PgmHeader("maxval must be positive".into()));
    }
    let expected = width * height;
    let data = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        cursor.expect_single_whitespace()?;
        let payload = cursor.rest();
        if payload.len() < expected {
            return Err(Error::PgmTruncated {
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].iter().map(|&b| b as f64).collect()
    } else {
        let mut data = Vec::with_capacity(expected);
        while data.len() < expected {
            match cursor.try_token()? {
                Some(tok) => {
                    let v: usize = tok.parse().map_err(|_| {
                        Error::PgmPayload(format!("invalid sample value {tok:?}"))
                    })?;
                    if v > maxval {
                        return Err(Error::PgmPayload(format!(
                            "sample value {v} exceeds maxval {maxval}"
                        )));
                    }
                    data.push(v as f64);
                }
                None => {
                    return Err(Error::PgmTruncated {
                        expected,
                        found: data.len(),
                    })
                }
            }
        }
        data
    };
    SpatialImage::new(width, height, data)
}

/// Write a binary (P5) PGM; values are clamped to `[0, 255]` and rounded.
pub fn save_pgm(img: &SpatialImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Encode as P5 bytes; the companion of [`parse_pgm`].
pub fn encode_pgm(img: &SpatialImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = header.into_bytes();
    out.extend(
        img.data
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8),
    );
    out
}

/// Token reader over a PGM header: skips whitespace and `#` comments.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn try_token(&mut self) -> Result<Option<String>> {
        self.skip_filler();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::PgmHeader("non-ASCII bytes in header".into()))?;
        Ok(Some(token.to_string()))
    }

    fn token(&mut self) -> Result<String> {
        self.try_token()?
            .ok_or_else(|| Error::PgmHeader("unexpected end of file".into()))
    }

    fn unsigned(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::PgmHeader(format!("invalid {what} {tok:?}")))
    }

    fn expect_single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::PgmHeader(
                "missing whitespace between maxval and raster".into(),
            ))
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> SpatialImage {
        SpatialImage::from_fn(w, h, |_, _| rng.gen_range(0.0..=255.0))
    }

    #[test]
    fn parse_p5_maps_bytes_directly() {
        let bytes = b"P5\n2 2\n255\n\x00\x80\xff\x40";
        let img = parse_pgm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 128.0, 255.0, 64.0]);
    }

    #[test]
    fn parse_p2_matches_p5() {
        let p5 = parse_pgm(b"P5\n2 2\n255\n\x00\x80\xff\x40").unwrap();
        let p2 = parse_pgm(b"P2\n# comment line\n2 2\n255\n0 128\n255 64\n").unwrap();
        assert_eq!(p5, p2);
    }

    #[test]
    fn rejects_16bit_maxval() {
        let err = parse_pgm(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::PgmMaxval(65535)));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            parse_pgm(b"P7\n1 1\n255\n\x00"),
            Err(Error::PgmHeader(_))
        ));
        assert!(matches!(
            parse_pgm(b"P5\n4 4\n255\n\x00\x01"),
            Err(Error::PgmTruncated {
                expected: 16,
                found: 2
            })
        ));
        assert!(matches!(
            parse_pgm(b"P2\n2 2\n255\n0 1 2"),
            Err(Error::PgmTruncated {
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn save_clamps_and_rounds() {
        let img = SpatialImage::new(3, 1, vec![255.4, -3.0, 99.6]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 0, 100]);
    }

    #[test]
    fn save_load_round_trip_within_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(&mut rng, 16, 16);
        save_pgm(&img, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        let max_err = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 0.5, "max_err = {max_err}");
    }

    #[test]
    fn single_pixel_payload_byte() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.pgm");
        save_pgm(&SpatialImage::constant(1, 1, 200.0).unwrap(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\xc8");
    }

    #[test]
    fn luma_gray_fixed_point_and_red() {
        let gray = SpatialImage::constant(4, 4, 100.0).unwrap();
        let luma = rgb_to_luma(&gray, &gray, &gray).unwrap();
        for &v in luma.pixels() {
            assert!((v - 100.0).abs() < 1e-12);
        }
        let red = SpatialImage::constant(2, 2, 255.0).unwrap();
        let zero = SpatialImage::constant(2, 2, 0.0).unwrap();
        let luma = rgb_to_luma(&red, &zero, &zero).unwrap();
        assert!((luma.at(0, 0) - 76.245).abs() < 1e-9);
    }

    #[test]
    fn luma_rejects_mismatched_planes() {
        let a = SpatialImage::constant(2, 2, 1.0).unwrap();
        let b = SpatialImage::constant(3, 2, 1.0).unwrap();
        assert!(matches!(
            rgb_to_luma(&a, &b, &a),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let img = SpatialImage::constant(4, 3, 37.5).unwrap();
        let up = upsample_8x(&img).unwrap();
        assert_eq!((up.width(), up.height()), (32, 24));
        for &v in up.pixels() {
            assert!((v - 37.5).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_left_right_columns_and_monotonicity() {
        let img = SpatialImage::new(2, 2, vec![0.0, 8.0, 0.0, 8.0]).unwrap();
        let up = upsample_8x(&img).unwrap();
        for row in 0..up.height() {
            assert_eq!(up.at(row, 0), 0.0);
            assert_eq!(up.at(row, up.width() - 1), 8.0);
            for col in 1..up.width() {
                assert!(up.at(row, col) >= up.at(row, col - 1));
            }
        }
    }

    #[test]
    fn upsample_rejects_degenerate_dimension() {
        let img = SpatialImage::constant(1, 5, 0.0).unwrap();
        assert!(upsample_8x(&img).is_err());
    }

    /// Closed-form bilinear oracle, written independently of the
    /// implementation: evaluates the corner-aligned sample position and the
    /// four-tap weighted sum directly per output pixel.
    fn bilinear_oracle(img: &SpatialImage, i: usize, j: usize) -> f64 {
        let (h, w) = (img.height(), img.width());
        let y = i as f64 * (h - 1) as f64 / (8 * h - 1) as f64;
        let x = j as f64 * (w - 1) as f64 / (8 * w - 1) as f64;
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        (1.0 - fy) * ((1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1))
            + fy * ((1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1))
    }

    #[test]
    fn upsample_matches_closed_form_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 16, 16);
        let up = upsample_8x(&img).unwrap();
        assert_eq!((up.width(), up.height()), (128, 128));
        for i in 0..up.height() {
            for j in 0..up.width() {
                assert_eq!(up.at(i, j), bilinear_oracle(&img, i, j), "at ({i},{j})");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn prop_save_load_identity_within_half(
            w in 1usize..12,
            h in 1usize..12,
            seed in proptest::prelude::any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, w, h);
            let back = parse_pgm(&encode_pgm(&img)).unwrap();
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                proptest::prop_assert!((a - b).abs() <= 0.5);
            }
        }

        #[test]
        fn prop_upsample_range_contained(
            w in 2usize..8,
            h in 2usize..8,
            seed in proptest::prelude::any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, w, h);
            let up = upsample_8x(&img).unwrap();
            let (lo, hi) = (img.min_value(), img.max_value());
            for &v in up.pixels() {
                proptest::prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
