//! Blockwise 8×8 orthonormal DCT and its inverse, with block coefficients
//! rearranged into 64 spatially-correlated frequency channels.
//!
//! An input image of shape `(8H, 8W)` is cut into 8×8 blocks; the type-II
//! DCT coefficient of block `(i, j)` at in-block frequency `(u, v)` is
//! stored at position `(i, j)` of channel `k = 8u + v`. Each channel is
//! therefore an `H×W` grid that preserves the image's block-level spatial
//! layout. The transform pair is orthonormal (`α(0) = √(1/8)`,
//! `α(k>0) = √(2/8)` per dimension), so energy is conserved exactly and no
//! level shift is applied: the DC channel simply absorbs the mean.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::SpatialImage;

/// Number of frequency channels produced per image.
pub const CHANNELS: usize = 64;
/// Transform block edge length.
pub const BLOCK: usize = 8;

/// 64-channel frequency decomposition of an image of shape `(8H, 8W)`.
///
/// Stored channel-major: channel `k` occupies `data[k*H*W .. (k+1)*H*W]`
/// as a row-major `H×W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FrequencyTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; CHANNELS * height * width],
        }
    }

    /// Channel grid height H (the image height divided by 8).
    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel grid width W (the image width divided by 8).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let hw = self.positions();
        &self.data[k * hw..(k + 1) * hw]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let hw = self.positions();
        &mut self.data[k * hw..(k + 1) * hw]
    }

    #[inline]
    pub fn at(&self, k: usize, row: usize, col: usize) -> f64 {
        self.data[(k * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, k: usize, row: usize, col: usize, value: f64) {
        self.data[(k * self.height + row) * self.width + col] = value;
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.data
    }
}

/// Orthonormal 1D DCT-II basis: `basis[u][x] = α(u) cos((2x+1)uπ/16)`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; BLOCK]; BLOCK];
        for (u, row) in c.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (PI * (2 * x + 1) as f64 * u as f64 / (2 * BLOCK) as f64).cos();
            }
        }
        c
    })
}

/// Blockwise forward DCT; the image dimensions must be divisible by 8.
pub fn dct_forward(img: &SpatialImage) -> Result<FrequencyTensor> {
    if img.width() % BLOCK != 0 || img.height() % BLOCK != 0 {
        return Err(Error::invalid(format!(
            "image dimensions {}x{} are not divisible by {}",
            img.width(),
            img.height(),
            BLOCK
        )));
    }
    let c = basis();
    let (bh, bw) = (img.height() / BLOCK, img.width() / BLOCK);
    let mut out = FrequencyTensor::zeros(bh, bw);
    let mut block = [[0.0; BLOCK]; BLOCK];
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for bi in 0..bh {
        for bj in 0..bw {
            for (r, row) in block.iter_mut().enumerate() {
                for (col, v) in row.iter_mut().enumerate() {
                    *v = img.at(bi * BLOCK + r, bj * BLOCK + col);
                }
            }
            // Rows, then columns: tmp[u][y] = Σ_x c[u][x]·block[x][y].
            for u in 0..BLOCK {
                for y in 0..BLOCK {
                    let mut acc = 0.0;
                    for x in 0..BLOCK {
                        acc += c[u][x] * block[x][y];
                    }
                    tmp[u][y] = acc;
                }
            }
            for u in 0..BLOCK {
                for v in 0..BLOCK {
                    let mut acc = 0.0;
                    for y in 0..BLOCK {
                        acc += c[v][y] * tmp[u][y];
                    }
                    out.set(u * BLOCK + v, bi, bj, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Blockwise inverse DCT. No clamping is applied; the output is the exact
/// linear inverse of [`dct_forward`] up to floating-point error.
pub fn dct_inverse(freq: &FrequencyTensor) -> SpatialImage {
    let c = basis();
    let (bh, bw) = (freq.height, freq.width);
    let mut pixels = vec![0.0; (bh * BLOCK) * (bw * BLOCK)];
    let row_stride = bw * BLOCK;
    let mut coeff = [[0.0; BLOCK]; BLOCK];
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for bi in 0..bh {
        for bj in 0..bw {
            for u in 0..BLOCK {
                for v in 0..BLOCK {
                    coeff[u][v] = freq.at(u * BLOCK + v, bi, bj);
                }
            }
            // tmp[x][v] = Σ_u c[u][x]·coeff[u][v]
            for x in 0..BLOCK {
                for v in 0..BLOCK {
                    let mut acc = 0.0;
                    for u in 0..BLOCK {
                        acc += c[u][x] * coeff[u][v];
                    }
                    tmp[x][v] = acc;
                }
            }
            for x in 0..BLOCK {
                for y in 0..BLOCK {
                    let mut acc = 0.0;
                    for v in 0..BLOCK {
                        acc += c[v][y] * tmp[x][v];
                    }
                    pixels[(bi * BLOCK + x) * row_stride + bj * BLOCK + y] = acc;
                }
            }
        }
    }
    SpatialImage::new(bw * BLOCK, bh * BLOCK, pixels)
        .expect("inverse transform of a finite tensor is finite")
}

/// Zero every channel outside `keep`, invert, and clamp to `[0, 255]`.
///
/// This is the reconstruction an observer sees when only the kept channels
/// were transmitted: removed frequencies are padded with zeros.
pub fn zero_pad_reconstruct(freq: &FrequencyTensor, keep: &[usize]) -> Result<SpatialImage> {
    if let Some(&bad) = keep.iter().find(|&&k| k >= CHANNELS) {
        return Err(Error::invalid(format!(
            "channel index {bad} out of range (0..{CHANNELS})"
        )));
    }
    let mut masked = FrequencyTensor::zeros(freq.height, freq.width);
    for &k in keep {
        masked.channel_mut(k).copy_from_slice(freq.channel(k));
    }
    Ok(dct_inverse(&masked).clamped())
}

/// Channel indices `k = 8u + v` listed in JPEG zigzag scan order.
///
/// Energy rankings of natural imagery are often quoted in zigzag terms, and
/// the calibration-free fallback prune spec is defined by this order.
pub fn zigzag_order() -> [usize; CHANNELS] {
    let mut order = [0usize; CHANNELS];
    let (mut u, mut v) = (0isize, 0isize);
    let edge = BLOCK as isize;
    for slot in order.iter_mut() {
        *slot = (u * edge + v) as usize;
        if (u + v) % 2 == 0 {
            // moving up-right
            if v == edge - 1 {
                u += 1;
            } else if u == 0 {
                v += 1;
            } else {
                u -= 1;
                v += 1;
            }
        } else {
            // moving down-left
            if u == edge - 1 {
                v += 1;
            } else if v == 0 {
                u += 1;
            } else {
                u += 1;
                v -= 1;
            }
        }
    }
    order
}
