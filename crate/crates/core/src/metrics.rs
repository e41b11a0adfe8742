//! Image-quality and privacy metrics: SSIM, PSNR, and protection reports
//! built from zero-padded reconstructions.

use rand::Rng;

use crate::dct::{self, FrequencyTensor};
use crate::energy::{self, PruneSpec};
use crate::error::{Error, Result};
use crate::image::SpatialImage;
use crate::ranks::{self, RankSet};

/// SSIM window edge length.
const WINDOW: usize = 11;
/// Gaussian window standard deviation.
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Dynamic range of 8-bit imagery.
const DYNAMIC_RANGE: f64 = 255.0;
/// PSNR reported for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

/// Normalized 11×11 Gaussian window, σ = 1.5.
fn gaussian_window() -> [[f64; WINDOW]; WINDOW] {
    let mut w = [[0.0; WINDOW]; WINDOW];
    let half = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dy = i as f64 - half;
            let dx = j as f64 - half;
            *v = (-(dx * dx + dy * dy) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
            sum += *v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    w
}

/// Structural similarity, averaged over all fully-interior 11×11 windows.
pub fn ssim(a: &SpatialImage, b: &SpatialImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(Error::invalid(format!(
            "ssim requires images of at least {WINDOW}x{WINDOW}"
        )));
    }
    let window = gaussian_window();
    let c1 = (K1 * DYNAMIC_RANGE) * (K1 * DYNAMIC_RANGE);
    let c2 = (K2 * DYNAMIC_RANGE) * (K2 * DYNAMIC_RANGE);
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(a.height() - WINDOW) {
        for left in 0..=(a.width() - WINDOW) {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
            for (wy, row) in window.iter().enumerate() {
                for (wx, &weight) in row.iter().enumerate() {
                    let pa = a.at(top + wy, left + wx);
                    let pb = b.at(top + wy, left + wx);
                    mu_a += weight * pa;
                    mu_b += weight * pb;
                    aa += weight * pa * pa;
                    bb += weight * pb * pb;
                    ab += weight * pa * pb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Peak signal-to-noise ratio in decibels, capped at [`PSNR_CAP`] for
/// identical images.
pub fn psnr(a: &SpatialImage, b: &SpatialImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10())
}

/// Quality/privacy summary of one reconstruction against its original.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub ssim: f64,
    pub psnr: f64,
    pub energy_retention: f64,
}

impl QualityReport {
    pub fn to_text(&self, label: &str) -> String {
        format!(
            "{label}.ssim={:.6}\n{label}.psnr={:.4}\n{label}.energy_retention={:.6}\n",
            self.ssim, self.psnr, self.energy_retention
        )
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\"ssim\": {:.6}, \"psnr\": {:.4}, \"energy_retention\": {:.6}}}",
            self.ssim, self.psnr, self.energy_retention
        )
    }
}

/// Zero-pad everything outside `keep`, reconstruct, and score against the
/// original. `original` must already have 8-divisible dimensions.
pub fn reconstruction_report(
    original: &SpatialImage,
    freq: &FrequencyTensor,
    keep: &[usize],
) -> Result<QualityReport> {
    let recon = dct::zero_pad_reconstruct(freq, keep)?;
    let profile = energy::channel_energy(freq);
    Ok(QualityReport {
        ssim: ssim(&recon, original)?,
        psnr: psnr(&recon, original)?,
        energy_retention: energy::energy_retention(&profile, keep),
    })
}

/// Score the reconstruction an observer could form from one drawn rank's
/// channels, placed at their true spectral positions.
pub fn protection_report(
    original: &SpatialImage,
    prune: &PruneSpec,
    ranks: &RankSet,
    rng: &mut impl Rng,
) -> Result<QualityReport> {
    debug_assert_eq!(prune.high_indices(), ranks.prune().high_indices());
    let freq = dct::dct_forward(original)?;
    let (i, _j) = ranks::draw_rank(ranks, rng);
    let keep = ranks.channels_of_selection(i)?;
    reconstruction_report(original, &freq, &keep)
}

/// Score the σ-pruned-only reconstruction (all high channels kept).
pub fn pruned_only_report(original: &SpatialImage, prune: &PruneSpec) -> Result<QualityReport> {
    let freq = dct::dct_forward(original)?;
    reconstruction_report(original, &freq, prune.high_indices())
}
