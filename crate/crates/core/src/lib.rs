//! Privacy-preserving face-image preprocessing in the frequency domain.
//!
//! The pipeline decomposes a raster image into 64 spatially-correlated
//! frequency channels with a blockwise 8×8 DCT, prunes the σ highest-energy
//! (human-perceivable) channels, and transmits a small randomly selected,
//! randomly permuted subset of the remainder. The crate also bundles the
//! desk-scale harnesses used to verify the two load-bearing properties:
//! models trained on per-sample random channel subsets beat models trained
//! on any fixed subset, and recovery attacks degrade in the expected
//! black-box < white-box < enhanced < unprotected order.

pub mod cli;
pub mod dct;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod image;
mod linalg;
pub mod metrics;
pub mod pfpr;
pub mod ranks;
pub mod recognition;
pub mod recovery;

pub use dct::{dct_forward, dct_inverse, zero_pad_reconstruct, FrequencyTensor, BLOCK, CHANNELS};
pub use energy::{
    aggregate_profiles, channel_energy, energy_retention, make_prune_spec, EnergyProfile,
    PruneSpec,
};
pub use error::{Error, Result};
pub use image::{load_pgm, rgb_to_luma, save_pgm, upsample_8x, SpatialImage};
pub use metrics::{protection_report, psnr, ssim, QualityReport};
pub use ranks::{
    apply_rank, augment, build_rank_set, draw_rank, Permutation, ProtectedRep, RankParams,
    RankSet, Selection, DEFAULT_PARAMS,
};
