//! Per-channel energy computation, channel ranking, and the low/high
//! frequency split.
//!
//! A channel's energy is the mean absolute amplitude of its coefficients.
//! High-energy channels are the ones human observers perceive; the prune
//! spec records the σ highest-energy channels to remove and the remaining
//! d = 64−σ channels that stay available to models.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dct::{self, FrequencyTensor, CHANNELS};
use crate::error::{Error, Result};

/// Per-channel mean absolute amplitude, possibly aggregated over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    energies: [f64; CHANNELS],
    source_count: usize,
}

impl EnergyProfile {
    pub fn new(energies: [f64; CHANNELS], source_count: usize) -> Result<Self> {
        if source_count == 0 {
            return Err(Error::invalid("source_count must be >= 1"));
        }
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid("energies must be finite and >= 0"));
        }
        Ok(Self {
            energies,
            source_count,
        })
    }

    pub fn energies(&self) -> &[f64; CHANNELS] {
        &self.energies
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }
}

/// Mean absolute coefficient amplitude per channel (a single image).
pub fn channel_energy(freq: &FrequencyTensor) -> EnergyProfile {
    let positions = freq.positions() as f64;
    let mut energies = [0.0; CHANNELS];
    for (k, slot) in energies.iter_mut().enumerate() {
        *slot = freq.channel(k).iter().map(|c| c.abs()).sum::<f64>() / positions;
    }
    EnergyProfile {
        energies,
        source_count: 1,
    }
}

/// Combine profiles into one, weighting each by its source count.
pub fn aggregate_profiles(profiles: &[EnergyProfile]) -> Result<EnergyProfile> {
    if profiles.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty profile list"));
    }
    let total: usize = profiles.iter().map(|p| p.source_count).sum();
    let mut energies = [0.0; CHANNELS];
    for p in profiles {
        let w = p.source_count as f64;
        for (acc, e) in energies.iter_mut().zip(&p.energies) {
            *acc += w * e;
        }
    }
    for e in &mut energies {
        *e /= total as f64;
    }
    Ok(EnergyProfile {
        energies,
        source_count: total,
    })
}

/// Fraction of total energy carried by `indices`; 0 when the total is 0.
pub fn energy_retention(profile: &EnergyProfile, indices: &[usize]) -> f64 {
    let total: f64 = profile.energies.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let subset: f64 = indices.iter().map(|&k| profile.energies[k]).sum();
    subset / total
}

/// Frozen low/high channel split: `low` holds the σ channels to prune,
/// `high` the `64−σ` channels kept for models, both ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSpec {
    sigma: usize,
    low: Vec<usize>,
    high: Vec<usize>,
}

pub const PRUNE_SPEC_VERSION: u32 = 1;

impl PruneSpec {
    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn low_indices(&self) -> &[usize] {
        &self.low
    }

    pub fn high_indices(&self) -> &[usize] {
        &self.high
    }

    /// Calibration-free fallback: prune the first σ channels in zigzag
    /// order, which approximates the energy order of natural images.
    pub fn zigzag_fallback(sigma: usize) -> Result<Self> {
        check_sigma(sigma)?;
        let mut low: Vec<usize> = dct::zigzag_order()[..sigma].to_vec();
        low.sort_unstable();
        let high = complement(&low);
        Ok(Self { sigma, low, high })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version={PRUNE_SPEC_VERSION}").unwrap();
        writeln!(out, "sigma={}", self.sigma).unwrap();
        writeln!(out, "low={}", join_indices(&self.low)).unwrap();
        writeln!(out, "high={}", join_indices(&self.high)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text, "prune spec")?;
        let version: u32 = get_parsed(&kv, "version", "prune spec")?;
        if version != PRUNE_SPEC_VERSION {
            return Err(Error::SpecParse {
                kind: "prune spec",
                detail: format!("unsupported version {version}"),
            });
        }
        let sigma: usize = get_parsed(&kv, "sigma", "prune spec")?;
        let low = parse_indices(get_raw(&kv, "low", "prune spec")?, "prune spec")?;
        let high = parse_indices(get_raw(&kv, "high", "prune spec")?, "prune spec")?;
        let spec = Self { sigma, low, high };
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    fn validate(&self) -> Result<()> {
        let bad = |detail: String| Error::SpecParse {
            kind: "prune spec",
            detail,
        };
        if self.low.len() != self.sigma {
            return Err(bad(format!(
                "low list has {} entries, sigma is {}",
                self.low.len(),
                self.sigma
            )));
        }
        if self.low.len() + self.high.len() != CHANNELS {
            return Err(bad("low and high lists must cover all 64 channels".into()));
        }
        let mut seen = [false; CHANNELS];
        for &k in self.low.iter().chain(&self.high) {
            if k >= CHANNELS {
                return Err(bad(format!("channel index {k} out of range")));
            }
            if seen[k] {
                return Err(bad(format!("channel index {k} listed twice")));
            }
            seen[k] = true;
        }
        if self.high.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("high list must be strictly ascending".into()));
        }
        Ok(())
    }
}

/// Select the σ highest-energy channels as the low (pruned) set.
/// Ties break toward the lower channel index.
pub fn make_prune_spec(profile: &EnergyProfile, sigma: usize) -> Result<PruneSpec> {
    check_sigma(sigma)?;
    let mut order: Vec<usize> = (0..CHANNELS).collect();
    order.sort_by(|&a, &b| {
        profile.energies[b]
            .partial_cmp(&profile.energies[a])
            .expect("energies are finite")
            .then(a.cmp(&b))
    });
    let mut low = order[..sigma].to_vec();
    low.sort_unstable();
    let high = complement(&low);
    Ok(PruneSpec { sigma, low, high })
}

fn check_sigma(sigma: usize) -> Result<()> {
    if (1..CHANNELS).contains(&sigma) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "sigma must be in 1..={}, got {sigma}",
            CHANNELS - 1
        )))
    }
}

fn complement(sorted_subset: &[usize]) -> Vec<usize> {
    (0..CHANNELS)
        .filter(|k| !sorted_subset.contains(k))
        .collect()
}

pub(crate) fn join_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn parse_indices(raw: &str, kind: &'static str) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|tok| {
            tok.trim().parse().map_err(|_| Error::SpecParse {
                kind,
                detail: format!("invalid index {tok:?}"),
            })
        })
        .collect()
}

pub(crate) fn parse_key_values(
    text: &str,
    kind: &'static str,
) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::SpecParse {
            kind,
            detail: format!("expected key=value, found {line:?}"),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn get_raw<'a>(
    kv: &'a [(String, String)],
    key: &str,
    kind: &'static str,
) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or(Error::SpecParse {
            kind,
            detail: format!("missing key {key:?}"),
        })
}

pub(crate) fn get_parsed<T: std::str::FromStr>(
    kv: &[(String, String)],
    key: &str,
    kind: &'static str,
) -> Result<T> {
    let raw = get_raw(kv, key, kind)?;
    raw.parse().map_err(|_| Error::SpecParse {
        kind,
        detail: format!("invalid value {raw:?} for key {key:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SpatialImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile_from(energies: [f64; CHANNELS]) -> EnergyProfile {
        EnergyProfile::new(energies, 1).unwrap()
    }

    #[test]
    fn energy_of_small_channel_by_hand() {
        // 2x2 channel [[1,-1],[2,0]] -> (1+1+2+0)/4 = 1.0
        let mut freq = FrequencyTensor::zeros(2, 2);
        freq.channel_mut(5).copy_from_slice(&[1.0, -1.0, 2.0, 0.0]);
        let profile = channel_energy(&freq);
        assert_eq!(profile.energies()[5], 1.0);
        assert_eq!(profile.energies()[0], 0.0);
    }

    #[test]
    fn energy_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = SpatialImage::from_fn(16, 16, |_, _| rng.gen_range(0.0..=255.0));
        let freq = crate::dct::dct_forward(&img).unwrap();
        let profile = channel_energy(&freq);
        for k in 0..CHANNELS {
            // Brute-force restatement of the mean-of-amplitudes definition.
            let mut acc = 0.0;
            for i in 0..freq.height() {
                for j in 0..freq.width() {
                    acc += freq.at(k, i, j).abs();
                }
            }
            let oracle = acc / (freq.height() * freq.width()) as f64;
            assert_eq!(profile.energies()[k], oracle, "channel {k}");
        }
    }

    #[test]
    fn aggregate_single_is_identity_and_pair_is_mean() {
        let mut e1 = [0.0; CHANNELS];
        let mut e2 = [0.0; CHANNELS];
        for k in 0..CHANNELS {
            e1[k] = k as f64;
            e2[k] = 2.0 * k as f64;
        }
        let p1 = profile_from(e1);
        let p2 = profile_from(e2);
        assert_eq!(aggregate_profiles(&[p1.clone()]).unwrap(), p1);
        let mean = aggregate_profiles(&[p1, p2]).unwrap();
        assert_eq!(mean.source_count(), 2);
        for k in 0..CHANNELS {
            assert!((mean.energies()[k] - 1.5 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_weights_by_source_count() {
        // counts 1,2,1 -> weighted mean, checked against scalar arithmetic.
        let mk = |v: f64, count: usize| {
            EnergyProfile::new([v; CHANNELS], count).unwrap()
        };
        let agg = aggregate_profiles(&[mk(1.0, 1), mk(4.0, 2), mk(9.0, 1)]).unwrap();
        let expected = (1.0 * 1.0 + 4.0 * 2.0 + 9.0 * 1.0) / 4.0;
        assert_eq!(agg.source_count(), 4);
        for &e in agg.energies() {
            assert!((e - expected).abs() < 1e-12);
        }
        assert!(aggregate_profiles(&[]).is_err());
    }

    #[test]
    fn prune_spec_on_monotone_profile() {
        let mut energies = [0.0; CHANNELS];
        for (k, e) in energies.iter_mut().enumerate() {
            *e = (CHANNELS - k) as f64;
        }
        let spec = make_prune_spec(&profile_from(energies), 10).unwrap();
        assert_eq!(spec.low_indices(), (0..10).collect::<Vec<_>>());
        assert_eq!(spec.high_indices(), (10..64).collect::<Vec<_>>());
    }

    #[test]
    fn prune_spec_tie_breaks_to_lower_index() {
        let spec = make_prune_spec(&profile_from([1.0; CHANNELS]), 2).unwrap();
        assert_eq!(spec.low_indices(), &[0, 1]);
    }

    #[test]
    fn prune_spec_rejects_bad_sigma() {
        let p = profile_from([1.0; CHANNELS]);
        assert!(make_prune_spec(&p, 0).is_err());
        assert!(make_prune_spec(&p, 64).is_err());
    }

    #[test]
    fn retention_all_and_none() {
        let mut energies = [0.0; CHANNELS];
        for (k, e) in energies.iter_mut().enumerate() {
            *e = 1.0 + k as f64;
        }
        let p = profile_from(energies);
        let all: Vec<usize> = (0..CHANNELS).collect();
        assert_eq!(energy_retention(&p, &all), 1.0);
        assert_eq!(energy_retention(&p, &[]), 0.0);
        assert_eq!(energy_retention(&profile_from([0.0; CHANNELS]), &all), 0.0);
    }

    #[test]
    fn zigzag_fallback_prunes_first_ten_zigzag_channels() {
        let spec = PruneSpec::zigzag_fallback(10).unwrap();
        let mut expected = vec![0, 1, 8, 16, 9, 2, 3, 10, 17, 24];
        expected.sort_unstable();
        assert_eq!(spec.low_indices(), expected.as_slice());
    }

    #[test]
    fn prune_spec_text_round_trip_and_errors() {
        let spec = PruneSpec::zigzag_fallback(10).unwrap();
        let text = spec.to_text();
        assert_eq!(PruneSpec::from_text(&text).unwrap(), spec);
        assert!(PruneSpec::from_text("version=9\nsigma=1\nlow=0\nhigh=1").is_err());
        assert!(PruneSpec::from_text("sigma=1").is_err());
    }

    proptest::proptest! {
        #[test]
        fn prop_prune_spec_is_permutation_equivariant(seed in proptest::prelude::any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut energies = [0.0; CHANNELS];
            for e in energies.iter_mut() {
                *e = rng.gen_range(0.0..100.0);
            }
            let mut perm: Vec<usize> = (0..CHANNELS).collect();
            perm.shuffle(&mut rng);
            let mut permuted = [0.0; CHANNELS];
            for (k, &pk) in perm.iter().enumerate() {
                permuted[pk] = energies[k];
            }
            let base = make_prune_spec(&profile_from(energies), 10).unwrap();
            let moved = make_prune_spec(&profile_from(permuted), 10).unwrap();
            // With distinct energies (a.s. for random draws) the selected set
            // must move with the permutation.
            let mut expected: Vec<usize> = base.low_indices().iter().map(|&k| perm[k]).collect();
            expected.sort_unstable();
            proptest::prop_assert_eq!(moved.low_indices(), expected.as_slice());
        }

        #[test]
        fn prop_retention_monotone_in_sigma(seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut energies = [0.0; CHANNELS];
            for e in energies.iter_mut() {
                *e = rng.gen_range(0.0..100.0);
            }
            let p = profile_from(energies);
            let mut prev = 0.0;
            for sigma in 1..CHANNELS {
                let spec = make_prune_spec(&p, sigma).unwrap();
                let r = energy_retention(&p, spec.low_indices());
                proptest::prop_assert!(r + 1e-12 >= prev);
                prev = r;
            }
        }
    }
}
