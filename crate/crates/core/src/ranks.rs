//! The rank system: pre-specified channel selections and permutations, the
//! per-sample random draw, and r-fold augmentation.
//!
//! A *rank* is one concrete pair `(S_i, P_j)`: a selection of `s` of the
//! `d` retained high-frequency channels and a permutation reordering those
//! `s` channels. The service provider fixes `m` selections (a
//! non-overlapping partition of the high list, so `m·s = d`) and `n`
//! permutations, and shares them with clients as a rank file. Each query
//! applies one uniformly drawn rank; the transmitted representation never
//! records which.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dct::FrequencyTensor;
use crate::energy::{self, PruneSpec};
use crate::error::{Error, Result};

/// Ascending positions `a_1 < … < a_s` into the high-frequency channel list.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    positions: Vec<usize>,
}

impl Selection {
    pub fn new(positions: Vec<usize>, d: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("selection must pick at least one position"));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("selection positions must be strictly ascending"));
        }
        if *positions.last().unwrap() >= d {
            return Err(Error::invalid(format!(
                "selection position {} out of range (0..{d})",
                positions.last().unwrap()
            )));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Bijection on `[0, s)`. `source_of[t]` is the input slot that lands in
/// output slot `t`, which matches the column convention of the 0/1
/// permutation-matrix product: column `t` of `P` indicates the channel
/// placed at output position `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Permutation {
    source_of: Vec<usize>,
}

impl Permutation {
    pub fn identity(s: usize) -> Self {
        Self {
            source_of: (0..s).collect(),
        }
    }

    pub fn new(source_of: Vec<usize>) -> Result<Self> {
        let s = source_of.len();
        let mut seen = vec![false; s];
        for &x in &source_of {
            if x >= s || seen[x] {
                return Err(Error::invalid("permutation mapping is not a bijection"));
            }
            seen[x] = true;
        }
        Ok(Self { source_of })
    }

    pub fn source_of(&self, slot: usize) -> usize {
        self.source_of[slot]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.source_of
    }

    pub fn len(&self) -> usize {
        self.source_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_of.is_empty()
    }
}

/// The `(σ, s, r, m, n)` parameter tuple of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankParams {
    pub sigma: usize,
    pub s: usize,
    pub r: usize,
    pub m: usize,
    pub n: usize,
}

/// Default parameter tuple `(σ, s, r, m, n) = (10, 9, 18, 6, 6)`.
pub const DEFAULT_PARAMS: RankParams = RankParams {
    sigma: 10,
    s: 9,
    r: 18,
    m: 6,
    n: 6,
};

/// The provider-side rank specification shared with all clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSet {
    prune: PruneSpec,
    selections: Vec<Selection>,
    permutations: Vec<Permutation>,
    seed: u64,
    params: RankParams,
}

pub const RANK_SET_VERSION: u32 = 1;

impl RankSet {
    pub fn prune(&self) -> &PruneSpec {
        &self.prune
    }

    pub fn selections(&self) -> &[Selection] {
        &self.selections
    }

    pub fn permutations(&self) -> &[Permutation] {
        &self.permutations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> RankParams {
        self.params
    }

    /// Override the stored augmentation factor `r`.
    pub fn with_augmentation(mut self, r: usize) -> Self {
        self.params.r = r;
        self
    }

    /// The actual channel indices (into the 64-channel tensor) selected by
    /// rank `(i, ·)`, in ascending order. Permutations do not change which
    /// channels are exposed, only their wire order.
    pub fn channels_of_selection(&self, i: usize) -> Result<Vec<usize>> {
        let sel = self
            .selections
            .get(i)
            .ok_or_else(|| Error::invalid(format!("selection id {i} out of range")))?;
        Ok(sel
            .positions()
            .iter()
            .map(|&p| self.prune.high_indices()[p])
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version={RANK_SET_VERSION}").unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "sigma={}", self.params.sigma).unwrap();
        writeln!(out, "s={}", self.params.s).unwrap();
        writeln!(out, "r={}", self.params.r).unwrap();
        writeln!(out, "m={}", self.params.m).unwrap();
        writeln!(out, "n={}", self.params.n).unwrap();
        writeln!(out, "low={}", energy::join_indices(self.prune.low_indices())).unwrap();
        writeln!(out, "high={}", energy::join_indices(self.prune.high_indices())).unwrap();
        for (i, sel) in self.selections.iter().enumerate() {
            writeln!(out, "S{}={}", i + 1, energy::join_indices(sel.positions())).unwrap();
        }
        for (j, perm) in self.permutations.iter().enumerate() {
            writeln!(out, "P{}={}", j + 1, energy::join_indices(perm.mapping())).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const KIND: &str = "rank set";
        let kv = energy::parse_key_values(text, KIND)?;
        let version: u32 = energy::get_parsed(&kv, "version", KIND)?;
        if version != RANK_SET_VERSION {
            return Err(Error::SpecParse {
                kind: KIND,
                detail: format!("unsupported version {version}"),
            });
        }
        let seed: u64 = energy::get_parsed(&kv, "seed", KIND)?;
        let params = RankParams {
            sigma: energy::get_parsed(&kv, "sigma", KIND)?,
            s: energy::get_parsed(&kv, "s", KIND)?,
            r: energy::get_parsed(&kv, "r", KIND)?,
            m: energy::get_parsed(&kv, "m", KIND)?,
            n: energy::get_parsed(&kv, "n", KIND)?,
        };
        let prune_text = format!(
            "version=1\nsigma={}\nlow={}\nhigh={}\n",
            params.sigma,
            energy::get_raw(&kv, "low", KIND)?,
            energy::get_raw(&kv, "high", KIND)?
        );
        let prune = PruneSpec::from_text(&prune_text)?;
        let d = prune.high_indices().len();
        let mut selections = Vec::with_capacity(params.m);
        for i in 0..params.m {
            let raw = energy::get_raw(&kv, &format!("S{}", i + 1), KIND)?;
            selections.push(Selection::new(energy::parse_indices(raw, KIND)?, d)?);
        }
        let mut permutations = Vec::with_capacity(params.n);
        for j in 0..params.n {
            let raw = energy::get_raw(&kv, &format!("P{}", j + 1), KIND)?;
            permutations.push(Permutation::new(energy::parse_indices(raw, KIND)?)?);
        }
        let set = Self {
            prune,
            selections,
            permutations,
            seed,
            params,
        };
        set.validate()?;
        Ok(set)
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
        let d = self.prune.high_indices().len();
        let RankParams { s, m, n, .. } = self.params;
        if self.selections.len() != m || self.permutations.len() != n {
            return Err(Error::invalid("selection/permutation counts disagree with params"));
        }
        if m * s != d {
            return Err(Error::invalid(format!("m*s = {} must equal d = {d}", m * s)));
        }
        let mut covered = vec![false; d];
        for sel in &self.selections {
            if sel.len() != s {
                return Err(Error::invalid("all selections must have length s"));
            }
            for &p in sel.positions() {
                if covered[p] {
                    return Err(Error::invalid(format!(
                        "position {p} appears in more than one selection"
                    )));
                }
                covered[p] = true;
            }
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::invalid("selections do not cover every position"));
        }
        if self.permutations.iter().any(|p| p.len() != s) {
            return Err(Error::invalid("all permutations must act on s slots"));
        }
        Ok(())
    }
}

/// Build the rank set: contiguous equal-length selection slices over the
/// high list, plus `n` seeded permutations with `P_1` forced to identity so
/// a no-permutation rank always exists for diagnostics.
pub fn build_rank_set(prune: &PruneSpec, m: usize, n: usize, seed: u64) -> Result<RankSet> {
    let d = prune.high_indices().len();
    if m == 0 || d % m != 0 {
        return Err(Error::invalid(format!("{d} not divisible by {m}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let s = d / m;
    let selections = (0..m)
        .map(|i| Selection::new((i * s..(i + 1) * s).collect(), d))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutations = Vec::with_capacity(n);
    permutations.push(Permutation::identity(s));
    for _ in 1..n {
        let mut mapping: Vec<usize> = (0..s).collect();
        mapping.shuffle(&mut rng);
        permutations.push(Permutation::new(mapping)?);
    }
    Ok(RankSet {
        prune: prune.clone(),
        selections,
        permutations,
        seed,
        params: RankParams {
            sigma: prune.sigma(),
            s,
            r: DEFAULT_PARAMS.r,
            m,
            n,
        },
    })
}

/// The transmitted subset: `s` frequency channels of `H×W` coefficients.
///
/// Deliberately carries no record of which `(S_i, P_j)` produced it; the
/// only fields are the channel data and its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedRep {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProtectedRep {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "payload has {} coefficients, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coefficients(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, t: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[t * hw..(t + 1) * hw]
    }
}

/// Apply rank `(i, j)`: gather the high-frequency channels, pick the
/// positions of `S_i` in ascending order, reorder by `P_j`, and narrow the
/// coefficients to the 32-bit wire precision.
pub fn apply_rank(
    freq: &FrequencyTensor,
    ranks: &RankSet,
    i: usize,
    j: usize,
) -> Result<ProtectedRep> {
    let params = ranks.params();
    if i >= params.m {
        return Err(Error::invalid(format!(
            "selection id {i} out of range (m = {})",
            params.m
        )));
    }
    if j >= params.n {
        return Err(Error::invalid(format!(
            "permutation id {j} out of range (n = {})",
            params.n
        )));
    }
    let sel = &ranks.selections()[i];
    let perm = &ranks.permutations()[j];
    let hw = freq.positions();
    let mut data = Vec::with_capacity(sel.len() * hw);
    for slot in 0..sel.len() {
        let position = sel.positions()[perm.source_of(slot)];
        let channel_index = ranks.prune().high_indices()[position];
        data.extend(freq.channel(channel_index).iter().map(|&c| c as f32));
    }
    ProtectedRep::new(sel.len(), freq.height(), freq.width(), data)
}

/// Draw a rank id uniformly from the `m×n` grid.
pub fn draw_rank(ranks: &RankSet, rng: &mut impl Rng) -> (usize, usize) {
    let params = ranks.params();
    (rng.gen_range(0..params.m), rng.gen_range(0..params.n))
}

/// Sample `r` independent protected representations of one image.
pub fn augment(
    freq: &FrequencyTensor,
    ranks: &RankSet,
    r: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ProtectedRep>> {
    (0..r)
        .map(|_| {
            let (i, j) = draw_rank(ranks, rng);
            apply_rank(freq, ranks, i, j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::CHANNELS;
    use crate::image::SpatialImage;

    fn random_tensor(seed: u64, h: usize, w: usize) -> FrequencyTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = SpatialImage::from_fn(8 * w, 8 * h, |_, _| rng.gen_range(0.0..=255.0));
        crate::dct::dct_forward(&img).unwrap()
    }

    fn default_prune() -> PruneSpec {
        PruneSpec::zigzag_fallback(10).unwrap()
    }

    /// Explicit `x_h · S · P` evaluation with 0/1 matrices, per the
    /// matrix-product definition of a rank.
    fn matrix_product_oracle(
        freq: &FrequencyTensor,
        ranks: &RankSet,
        i: usize,
        j: usize,
    ) -> Vec<f32> {
        let high = ranks.prune().high_indices();
        let d = high.len();
        let s = ranks.params().s;
        // S in {0,1}^{d×s}: s_kt = 1 iff k = a_t.
        let mut sel_matrix = vec![vec![0.0f64; s]; d];
        for (t, &a_t) in ranks.selections()[i].positions().iter().enumerate() {
            sel_matrix[a_t][t] = 1.0;
        }
        // P in {0,1}^{s×s}: column t indicates the slot landing at t.
        let mut perm_matrix = vec![vec![0.0f64; s]; s];
        for t in 0..s {
            perm_matrix[ranks.permutations()[j].source_of(t)][t] = 1.0;
        }
        let hw = freq.positions();
        let mut out = Vec::with_capacity(s * hw);
        for t in 0..s {
            for pos in 0..hw {
                let mut acc = 0.0f64;
                for k in 0..d {
                    // (x_h · S · P)_t = Σ_k x_h[k] (S·P)_{kt}
                    let mut sp = 0.0;
                    for q in 0..s {
                        sp += sel_matrix[k][q] * perm_matrix[q][t];
                    }
                    acc += freq.channel(high[k])[pos] * sp;
                }
                out.push(acc as f32);
            }
        }
        out
    }

    #[test]
    fn paper_defaults_partition_into_contiguous_slices() {
        let ranks = build_rank_set(&default_prune(), 6, 6, 99).unwrap();
        assert_eq!(ranks.params().s, 9);
        assert_eq!(ranks.selections()[0].positions(), (0..9).collect::<Vec<_>>());
        assert_eq!(
            ranks.selections()[5].positions(),
            (45..54).collect::<Vec<_>>()
        );
        assert_eq!(ranks.permutations()[0], Permutation::identity(9));
    }

    #[test]
    fn degenerate_single_rank() {
        let ranks = build_rank_set(&default_prune(), 1, 1, 0).unwrap();
        assert_eq!(ranks.selections()[0].positions(), (0..54).collect::<Vec<_>>());
        assert_eq!(ranks.permutations()[0], Permutation::identity(54));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = build_rank_set(&default_prune(), 6, 6, 1234).unwrap();
        let b = build_rank_set(&default_prune(), 6, 6, 1234).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = build_rank_set(&default_prune(), 6, 6, 1235).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn rejects_non_divisible_m() {
        let err = build_rank_set(&default_prune(), 5, 1, 0).unwrap_err();
        assert!(err.to_string().contains("54 not divisible by 5"));
    }

    #[test]
    fn identity_permutation_yields_ascending_selection() {
        let freq = random_tensor(4, 2, 2);
        let ranks = build_rank_set(&default_prune(), 6, 6, 7).unwrap();
        let rep = apply_rank(&freq, &ranks, 2, 0).unwrap();
        let expected = ranks.channels_of_selection(2).unwrap();
        for (slot, &k) in expected.iter().enumerate() {
            let want: Vec<f32> = freq.channel(k).iter().map(|&c| c as f32).collect();
            assert_eq!(rep.channel(slot), want.as_slice());
        }
    }

    #[test]
    fn three_channel_permutation_example() {
        // Selection picks (c0, c1, c2); a permutation sending slot order to
        // (c2, c0, c1) must produce exactly that output order.
        let mut freq = FrequencyTensor::zeros(1, 1);
        for k in 0..CHANNELS {
            freq.set(k, 0, 0, k as f64);
        }
        let prune = PruneSpec::zigzag_fallback(10).unwrap();
        let mut ranks = build_rank_set(&prune, 18, 1, 0).unwrap(); // s = 3
        ranks.permutations[0] = Permutation::new(vec![2, 0, 1]).unwrap();
        let picked = ranks.channels_of_selection(0).unwrap();
        let rep = apply_rank(&freq, &ranks, 0, 0).unwrap();
        assert_eq!(
            rep.coefficients(),
            &[
                picked[2] as f32,
                picked[0] as f32,
                picked[1] as f32
            ]
        );
        let oracle = matrix_product_oracle(&freq, &ranks, 0, 0);
        assert_eq!(rep.coefficients(), oracle.as_slice());
    }

    #[test]
    fn apply_rank_matches_matrix_product_oracle() {
        let freq = random_tensor(21, 2, 3);
        let ranks = build_rank_set(&default_prune(), 6, 6, 5).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let rep = apply_rank(&freq, &ranks, i, j).unwrap();
                let oracle = matrix_product_oracle(&freq, &ranks, i, j);
                assert_eq!(rep.coefficients(), oracle.as_slice(), "rank ({i},{j})");
            }
        }
    }

    #[test]
    fn apply_rank_is_deterministic_and_bounds_checked() {
        let freq = random_tensor(8, 2, 2);
        let ranks = build_rank_set(&default_prune(), 6, 6, 3).unwrap();
        let a = apply_rank(&freq, &ranks, 1, 2).unwrap();
        let b = apply_rank(&freq, &ranks, 1, 2).unwrap();
        assert_eq!(a, b);
        assert!(apply_rank(&freq, &ranks, 6, 0).is_err());
        assert!(apply_rank(&freq, &ranks, 0, 6).is_err());
    }

    #[test]
    fn draw_rank_degenerate_and_reproducible() {
        let ranks = build_rank_set(&default_prune(), 1, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(draw_rank(&ranks, &mut rng), (0, 0));
        }
        let ranks = build_rank_set(&default_prune(), 6, 6, 0).unwrap();
        let seq1: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20).map(|_| draw_rank(&ranks, &mut rng)).collect()
        };
        let seq2: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20).map(|_| draw_rank(&ranks, &mut rng)).collect()
        };
        assert_eq!(seq1, seq2);
    }

    #[test]
    fn draw_rank_is_roughly_uniform() {
        // 36,000 draws over a 6x6 grid: each cell expects 1000 with binomial
        // sd ~= 31.2; require every count within 5 sd.
        let ranks = build_rank_set(&default_prune(), 6, 6, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut counts = [[0usize; 6]; 6];
        for _ in 0..36_000 {
            let (i, j) = draw_rank(&ranks, &mut rng);
            counts[i][j] += 1;
        }
        let expected = 1000.0;
        let sd = (36_000.0_f64 * (1.0 / 36.0) * (35.0 / 36.0)).sqrt();
        for row in &counts {
            for &c in row {
                assert!(
                    (c as f64 - expected).abs() <= 5.0 * sd,
                    "count {c} outside 5 sigma of {expected}"
                );
            }
        }
    }

    #[test]
    fn augment_counts_and_degenerate_randomness() {
        let freq = random_tensor(30, 2, 2);
        let ranks = build_rank_set(&default_prune(), 6, 6, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(augment(&freq, &ranks, 1, &mut rng).unwrap().len(), 1);
        let reps = augment(&freq, &ranks, 18, &mut rng).unwrap();
        assert_eq!(reps.len(), 18);
        for rep in &reps {
            assert_eq!(rep.channels(), 9);
        }
        let single = build_rank_set(&default_prune(), 1, 1, 1).unwrap();
        let reps = augment(&freq, &single, 4, &mut rng).unwrap();
        for rep in &reps[1..] {
            assert_eq!(rep, &reps[0]);
        }
    }

    #[test]
    fn rank_set_text_round_trip() {
        let ranks = build_rank_set(&default_prune(), 6, 6, 31).unwrap().with_augmentation(7);
        let text = ranks.to_text();
        let back = RankSet::from_text(&text).unwrap();
        assert_eq!(back, ranks);
        assert_eq!(back.params().r, 7);
    }

    #[test]
    fn rank_set_rejects_broken_partition() {
        let ranks = build_rank_set(&default_prune(), 6, 1, 0).unwrap();
        let text = ranks.to_text().replace("S2=9,10,11,12,13,14,15,16,17", "S2=0,10,11,12,13,14,15,16,17");
        assert!(RankSet::from_text(&text).is_err());
    }

    proptest::proptest! {
        #[test]
        fn prop_selections_partition_high_positions(
            seed in proptest::prelude::any::<u64>(),
            m in proptest::sample::select(vec![1usize, 2, 3, 6, 9, 18, 27, 54])
        ) {
            let prune = default_prune();
            let ranks = build_rank_set(&prune, m, 3, seed).unwrap();
            let mut all: Vec<usize> = ranks
                .selections()
                .iter()
                .flat_map(|s| s.positions().iter().copied())
                .collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..54).collect::<Vec<_>>());
        }
    }
}
