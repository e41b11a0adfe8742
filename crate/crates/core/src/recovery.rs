//! Desk-scale recovery attacker: a regularized linear reconstructor mapping
//! protected representations back to raster images, used to compare
//! black-box, white-box, and enhanced white-box attacks against controls.
//!
//! The probe is linear on purpose: it fits in seconds, is deterministic,
//! and is strong enough to expose the information ordering between
//! protection variants. Absolute recovery quality is therefore a lower
//! bound on what a deep attacker could achieve; only orderings between
//! scenarios are meaningful.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dct::{FrequencyTensor, CHANNELS};
use crate::error::{Error, Result};
use crate::image::SpatialImage;
use crate::linalg::{self, Mat};
use crate::metrics;
use crate::ranks::{self, ProtectedRep, RankSet};
use crate::recognition::ToyDataset;

/// Knowledge assumption a probe was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankAssumption {
    /// Trained with the true rank set distribution (white-box).
    Known,
    /// Trained with a conjectured, wrong rank set (black-box).
    Conjectured,
    /// Trained per rank, applied with oracle rank labels (enhanced).
    PerRank,
}

/// Linear map from flattened representation coefficients (plus a constant
/// bias feature) to flattened target pixels.
#[derive(Debug, Clone)]
pub struct RecoveryProbe {
    /// (input_dim + 1) × output_dim.
    weights: Mat,
    input_dim: usize,
    target_width: usize,
    target_height: usize,
    pub lambda: f64,
    pub assumption: RankAssumption,
}

impl RecoveryProbe {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Reconstruct an image from one representation.
    pub fn recover(&self, rep: &ProtectedRep) -> Result<SpatialImage> {
        let input = rep_features(rep);
        if input.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "representation has {} coefficients, probe expects {}",
                input.len(),
                self.input_dim
            )));
        }
        let mut pixels = vec![0.0; self.target_width * self.target_height];
        for (r, &v) in input.iter().chain(std::iter::once(&1.0)).enumerate() {
            if v == 0.0 {
                continue;
            }
            for (p, &w) in pixels.iter_mut().zip(self.weights.row(r)) {
                *p += v * w;
            }
        }
        let img = SpatialImage::new(self.target_width, self.target_height, pixels)?;
        Ok(img.clamped())
    }

    /// Mean squared training residual of the probe on a pair set.
    pub fn mean_squared_error(&self, pairs: &[(ProtectedRep, SpatialImage)]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for (rep, target) in pairs {
            let recon = self.recover(rep)?;
            for (a, b) in recon.pixels().iter().zip(target.pixels()) {
                total += (a - b) * (a - b);
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

fn rep_features(rep: &ProtectedRep) -> Vec<f64> {
    rep.coefficients().iter().map(|&c| c as f64).collect()
}

/// Fit a ridge-regularized linear reconstructor on (representation, image)
/// pairs. Underdetermined fits are fine; the penalty keeps them unique.
pub fn fit_probe(
    pairs: &[(ProtectedRep, SpatialImage)],
    lambda: f64,
    assumption: RankAssumption,
) -> Result<RecoveryProbe> {
    let (first_rep, first_img) = pairs
        .first()
        .ok_or_else(|| Error::invalid("cannot fit a probe on zero pairs"))?;
    let input_dim = first_rep.coefficients().len();
    let (tw, th) = (first_img.width(), first_img.height());
    for (rep, img) in pairs {
        if rep.coefficients().len() != input_dim || img.width() != tw || img.height() != th {
            return Err(Error::invalid(
                "all training pairs must share representation and image dimensions",
            ));
        }
    }
    let n = pairs.len();
    let mut x = Mat::zeros(n, input_dim + 1);
    let mut y = Mat::zeros(n, tw * th);
    for (r, (rep, img)) in pairs.iter().enumerate() {
        let row = x.row_mut(r);
        for (slot, &c) in row.iter_mut().zip(rep.coefficients()) {
            *slot = c as f64;
        }
        row[input_dim] = 1.0;
        y.row_mut(r).copy_from_slice(img.pixels());
    }
    let weights = linalg::ridge_solve(&x, &y, lambda)?;
    Ok(RecoveryProbe {
        weights,
        input_dim,
        target_width: tw,
        target_height: th,
        lambda,
        assumption,
    })
}

/// The attack arms measured by [`attack_scenarios`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Probe trained and evaluated on unprotected 64-channel tensors.
    Control,
    /// Probe on σ-pruned-only representations (all high channels, in order).
    PrunedOnly,
    /// Single probe trained under the true rank set, no per-sample labels.
    WhiteBox,
    /// Single probe trained under a conjectured (wrong-seed) rank set.
    BlackBox,
    /// One probe per rank, applied with oracle rank labels at test time.
    Enhanced,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Control => "control",
            Scenario::PrunedOnly => "pruned-only",
            Scenario::WhiteBox => "white-box",
            Scenario::BlackBox => "black-box",
            Scenario::Enhanced => "enhanced",
        }
    }
}

/// Mean recovery quality of one scenario over the evaluation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub ssim: f64,
    pub psnr: f64,
}

/// Representation containing every channel of the tensor, unprotected.
fn full_rep(freq: &FrequencyTensor) -> ProtectedRep {
    let data = freq.coefficients().iter().map(|&c| c as f32).collect();
    ProtectedRep::new(CHANNELS, freq.height(), freq.width(), data)
        .expect("full tensor dimensions are consistent")
}

/// Representation of all high channels in ascending order (prune-only).
fn pruned_rep(freq: &FrequencyTensor, ranks: &RankSet) -> ProtectedRep {
    let hw = freq.positions();
    let high = ranks.prune().high_indices();
    let mut data = Vec::with_capacity(high.len() * hw);
    for &k in high {
        data.extend(freq.channel(k).iter().map(|&c| c as f32));
    }
    ProtectedRep::new(high.len(), freq.height(), freq.width(), data)
        .expect("pruned representation dimensions are consistent")
}

/// Fit and evaluate the five attack arms on one dataset.
///
/// The attacker owns the training split (it can generate representations
/// of its own images at will); recovery quality is measured on the test
/// split, whose representations are drawn by the true system.
pub fn attack_scenarios(
    dataset: &ToyDataset,
    true_ranks: &RankSet,
    conjectured: &RankSet,
    lambda: f64,
    seed: u64,
) -> Result<Vec<ScenarioResult>> {
    if true_ranks.to_text() == conjectured.to_text() {
        return Err(Error::invalid(
            "the black-box arm needs a conjectured rank set different from the true one",
        ));
    }
    if dataset.train.is_empty() || dataset.test.is_empty() {
        return Err(Error::invalid("attack_scenarios needs non-empty train and test splits"));
    }
    let params = true_ranks.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pair = |rep: ProtectedRep, img: &SpatialImage| (rep, img.clone());

    // Attacker-side training sets.
    let control_pairs: Vec<_> = dataset
        .train
        .iter()
        .map(|s| pair(full_rep(&s.freq), &s.base))
        .collect();
    let pruned_pairs: Vec<_> = dataset
        .train
        .iter()
        .map(|s| pair(pruned_rep(&s.freq, true_ranks), &s.base))
        .collect();
    let white_pairs: Vec<_> = dataset
        .train
        .iter()
        .map(|s| {
            let (i, j) = ranks::draw_rank(true_ranks, &mut rng);
            Ok(pair(ranks::apply_rank(&s.freq, true_ranks, i, j)?, &s.base))
        })
        .collect::<Result<_>>()?;
    let black_pairs: Vec<_> = dataset
        .train
        .iter()
        .map(|s| {
            let (i, j) = ranks::draw_rank(conjectured, &mut rng);
            Ok(pair(ranks::apply_rank(&s.freq, conjectured, i, j)?, &s.base))
        })
        .collect::<Result<_>>()?;

    let control_probe = fit_probe(&control_pairs, lambda, RankAssumption::Known)?;
    let pruned_probe = fit_probe(&pruned_pairs, lambda, RankAssumption::Known)?;
    let white_probe = fit_probe(&white_pairs, lambda, RankAssumption::Known)?;
    let black_probe = fit_probe(&black_pairs, lambda, RankAssumption::Conjectured)?;

    // Enhanced attacker: one probe per rank, each trained on every image
    // mapped through that specific rank.
    let mut per_rank = Vec::with_capacity(params.m * params.n);
    for i in 0..params.m {
        for j in 0..params.n {
            let pairs: Vec<_> = dataset
                .train
                .iter()
                .map(|s| Ok(pair(ranks::apply_rank(&s.freq, true_ranks, i, j)?, &s.base)))
                .collect::<Result<_>>()?;
            per_rank.push(fit_probe(&pairs, lambda, RankAssumption::PerRank)?);
        }
    }

    // True system draws one rank per query.
    let mut scores: Vec<(Scenario, f64, f64)> = [
        Scenario::Control,
        Scenario::PrunedOnly,
        Scenario::WhiteBox,
        Scenario::BlackBox,
        Scenario::Enhanced,
    ]
    .into_iter()
    .map(|s| (s, 0.0, 0.0))
    .collect();
    for sample in &dataset.test {
        let (i, j) = ranks::draw_rank(true_ranks, &mut rng);
        let query = ranks::apply_rank(&sample.freq, true_ranks, i, j)?;
        let recoveries = [
            control_probe.recover(&full_rep(&sample.freq))?,
            pruned_probe.recover(&pruned_rep(&sample.freq, true_ranks))?,
            white_probe.recover(&query)?,
            black_probe.recover(&query)?,
            per_rank[i * params.n + j].recover(&query)?,
        ];
        for ((_, ssim_sum, psnr_sum), recon) in scores.iter_mut().zip(&recoveries) {
            *ssim_sum += metrics::ssim(recon, &sample.base)?;
            *psnr_sum += metrics::psnr(recon, &sample.base)?;
        }
    }
    let count = dataset.test.len() as f64;
    Ok(scores
        .into_iter()
        .map(|(scenario, ssim_sum, psnr_sum)| ScenarioResult {
            scenario,
            ssim: ssim_sum / count,
            psnr: psnr_sum / count,
        })
        .collect())
}
