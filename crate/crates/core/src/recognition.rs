//! Desk-scale trainable classifier and experiment harness.
//!
//! The classifier is a deliberately small one-hidden-layer network over
//! flattened frequency channels. It exists to measure how much identity
//! information different channel subsets carry, not to compete with CNN
//! face models: the property of interest is the ordering between training
//! on all channels, on one fixed rank, and on per-sample random ranks.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dct::{self, FrequencyTensor, CHANNELS};
use crate::error::{Error, Result};
use crate::image::{self, SpatialImage};
use crate::ranks::{self, RankSet};

/// One labelled sample: the source raster, its frequency decomposition,
/// and an identity label.
#[derive(Debug, Clone)]
pub struct ToySample {
    pub base: SpatialImage,
    pub freq: FrequencyTensor,
    pub label: usize,
}

/// Train/test split of labelled frequency tensors.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub train: Vec<ToySample>,
    pub test: Vec<ToySample>,
    pub num_classes: usize,
}

impl ToyDataset {
    /// Channel grid dimensions (H, W), identical across samples.
    pub fn grid(&self) -> (usize, usize) {
        let freq = &self.train[0].freq;
        (freq.height(), freq.width())
    }
}

/// Procedural class parameters: every identity is an ellipse, a bar, and a
/// sinusoidal texture with class-specific placement and strength.
#[derive(Debug, Clone)]
struct ClassParams {
    background: f64,
    center: (f64, f64),
    radii: (f64, f64),
    ellipse_gain: f64,
    bar_vertical: bool,
    bar_pos: f64,
    bar_halfwidth: f64,
    bar_gain: f64,
    /// Dominant class grating in the low/mid bands.
    tex_freq: (f64, f64),
    tex_phase: f64,
    tex_gain: f64,
    /// Amplitudes over the shared high-band grating grid. All classes use
    /// the same spatial frequencies with per-sample random phases, so only
    /// the amplitude pattern carries identity: every frequency band keeps
    /// some class signal, but reading it needs second-order statistics.
    grid_gains: [f64; TEX_GRID.len()],
}

/// Shared high-band grating frequencies (cycles per image edge).
const TEX_GRID: [(f64, f64); 4] = [
    (5.0, 3.0),
    (4.0, 6.0),
    (6.0, 2.0),
    (7.0, 5.0),
];

impl ClassParams {
    fn draw(rng: &mut impl Rng, size: usize) -> Self {
        let l = size as f64;
        ClassParams {
            background: rng.gen_range(30.0..70.0),
            center: (
                rng.gen_range(0.3 * l..0.7 * l),
                rng.gen_range(0.3 * l..0.7 * l),
            ),
            radii: (rng.gen_range(0.12 * l..0.3 * l), rng.gen_range(0.12 * l..0.3 * l)),
            ellipse_gain: rng.gen_range(60.0..150.0),
            bar_vertical: rng.gen_bool(0.5),
            bar_pos: rng.gen_range(0.15 * l..0.85 * l),
            bar_halfwidth: rng.gen_range(0.5..1.5),
            bar_gain: rng.gen_range(40.0..110.0),
            tex_freq: (rng.gen_range(1.0..4.5), rng.gen_range(1.0..4.5)),
            tex_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            tex_gain: rng.gen_range(10.0..35.0),
            grid_gains: std::array::from_fn(|_| rng.gen_range(2.0..12.0)),
        }
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; both uniforms strictly inside (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn render_sample(params: &ClassParams, size: usize, noise_sigma: f64, rng: &mut impl Rng) -> SpatialImage {
    let l = size as f64;
    let dx = rng.gen_range(-3.0..3.0);
    let dy = rng.gen_range(-3.0..3.0);
    let bar_shift = rng.gen_range(-2.5..2.5);
    let phase_shift = rng.gen_range(-1.2..1.2);
    let gain_scale = rng.gen_range(0.75..1.25);
    let radius_scale = rng.gen_range(0.8..1.25);
    let tex_scale: [f64; TEX_GRID.len()] = std::array::from_fn(|_| rng.gen_range(0.6..1.4));
    let grid_phase: [f64; TEX_GRID.len()] =
        std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let mut img = SpatialImage::from_fn(size, size, |row, col| {
        let (x, y) = (col as f64, row as f64);
        let ex = (x - params.center.0 - dx) / (params.radii.0 * radius_scale);
        let ey = (y - params.center.1 - dy) / (params.radii.1 * radius_scale);
        let d2 = ex * ex + ey * ey;
        let ellipse = 1.0 / (1.0 + (4.0 * (d2 - 1.0)).exp());
        let along = if params.bar_vertical { x } else { y };
        let bar_d = (along - params.bar_pos - bar_shift).abs() - params.bar_halfwidth;
        let bar = 1.0 / (1.0 + (4.0 * bar_d).exp());
        let main_tex = params.tex_gain
            * (std::f64::consts::TAU * (params.tex_freq.0 * x + params.tex_freq.1 * y) / l
                + params.tex_phase
                + phase_shift)
                .sin();
        let grid_tex: f64 = TEX_GRID
            .iter()
            .enumerate()
            .map(|(g, &(fx, fy))| {
                tex_scale[g]
                    * params.grid_gains[g]
                    * (std::f64::consts::TAU * (fx * x + fy * y) / l + grid_phase[g]).sin()
            })
            .sum();
        let tex = main_tex + grid_tex;
        params.background
            + gain_scale * (params.ellipse_gain * ellipse + params.bar_gain * bar)
            + gain_scale * tex
    });
    for row in 0..size {
        for col in 0..size {
            let v = img.at(row, col) + noise_sigma * gaussian(rng);
            img.set(row, col, v.clamp(0.0, 255.0));
        }
    }
    img
}

/// Pixel noise applied to every synthetic sample.
const SYNTH_NOISE_SIGMA: f64 = 15.0;
/// Fraction of each class held out for testing.
const TEST_FRACTION: f64 = 0.2;

/// Procedurally generate a labelled dataset of face-like rasters and push
/// each through the 8× upsampling and DCT pipeline.
pub fn synth_dataset(
    num_classes: usize,
    per_class: usize,
    img_size: usize,
    seed: u64,
) -> Result<ToyDataset> {
    if !matches!(img_size, 16 | 24 | 32) {
        return Err(Error::invalid(format!(
            "img_size must be one of 16, 24, 32, got {img_size}"
        )));
    }
    if num_classes == 0 || per_class == 0 {
        return Err(Error::invalid("num_classes and per_class must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_per_class =
        ((per_class as f64 * TEST_FRACTION).round() as usize).clamp(usize::from(per_class > 1), per_class - 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 0..num_classes {
        let params = ClassParams::draw(&mut rng, img_size);
        for k in 0..per_class {
            let base = render_sample(&params, img_size, SYNTH_NOISE_SIGMA, &mut rng);
            let freq = dct::dct_forward(&image::upsample_8x(&base)?)?;
            let sample = ToySample { base, freq, label };
            if k < test_per_class {
                test.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok(ToyDataset {
        train,
        test,
        num_classes,
    })
}

/// Load a dataset from a directory whose immediate subdirectories are
/// classes containing PGM files. Files are sorted per class; the first
/// fifth of each class becomes the test split.
pub fn dataset_from_pgm_dir(dir: impl AsRef<Path>) -> Result<ToyDataset> {
    let dir = dir.as_ref();
    let mut class_dirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no class subdirectories",
            dir.display()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, class_dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(class_dir)
            .map_err(|e| Error::io(class_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map_or(false, |ext| ext == "pgm"))
            .collect();
        files.sort();
        let test_count = (files.len() as f64 * TEST_FRACTION).round() as usize;
        for (k, file) in files.iter().enumerate() {
            let base = image::load_pgm(file)?;
            let freq = dct::dct_forward(&image::upsample_8x(&base)?)?;
            let sample = ToySample { base, freq, label };
            if k < test_count {
                test.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok(ToyDataset {
        train,
        test,
        num_classes: class_dirs.len(),
    })
}

/// Which inputs the model trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// All 64 channels (unprotected baseline).
    FullChannels,
    /// One fixed rank `(S_i, P_0)` for every sample (the vanilla method).
    FixedRank(usize),
    /// A fresh uniformly drawn rank per sample (the randomized method).
    RandomRank,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub seed: u64,
    /// Additive margin subtracted from the true-class logit during
    /// training; `None` trains plain cross-entropy.
    pub margin: Option<f64>,
    /// In random-rank mode, pre-draw this many representations per training
    /// image once and train on the frozen, shuffled pool instead of
    /// redrawing every epoch.
    pub frozen_augmentation: Option<usize>,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        TrainConfig {
            mode,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            hidden_width: 32,
            seed: 0,
            margin: None,
            frozen_augmentation: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.frozen_augmentation == Some(0) {
            return Err(Error::invalid("frozen_augmentation must be >= 1"));
        }
        Ok(())
    }
}

/// Per-channel normalization statistics estimated on the train split and
/// applied by clients before rank sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

const STD_FLOOR: f64 = 1e-6;

impl ChannelStats {
    pub fn fit(samples: &[ToySample]) -> Self {
        let mut mean = [0.0; CHANNELS];
        let mut sq = [0.0; CHANNELS];
        let mut count = 0usize;
        for sample in samples {
            count += sample.freq.positions();
            for k in 0..CHANNELS {
                for &c in sample.freq.channel(k) {
                    mean[k] += c;
                    sq[k] += c * c;
                }
            }
        }
        let n = count.max(1) as f64;
        let mut std = [0.0; CHANNELS];
        for k in 0..CHANNELS {
            mean[k] /= n;
            std[k] = (sq[k] / n - mean[k] * mean[k]).max(0.0).sqrt().max(STD_FLOOR);
        }
        ChannelStats { mean, std }
    }

    pub fn normalize(&self, freq: &FrequencyTensor) -> FrequencyTensor {
        let mut out = freq.clone();
        for k in 0..CHANNELS {
            let (m, s) = (self.mean[k], self.std[k]);
            for c in out.channel_mut(k) {
                *c = (*c - m) / s;
            }
        }
        out
    }
}

/// One-hidden-layer rectifier network over flattened channel inputs.
/// `hidden_width == 0` degenerates to a linear softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub num_classes: usize,
    /// hidden_width × input_dim, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// num_classes × fan_in, where fan_in = hidden_width or input_dim.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub stats: ChannelStats,
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PFTM";
pub const CHECKPOINT_VERSION: u16 = 1;

impl ToyModel {
    fn init(input_dim: usize, hidden_width: usize, num_classes: usize, stats: ChannelStats, rng: &mut impl Rng) -> Self {
        let fan2 = if hidden_width == 0 { input_dim } else { hidden_width };
        let lim1 = (6.0 / (input_dim + hidden_width.max(1)) as f64).sqrt();
        let lim2 = (6.0 / (fan2 + num_classes) as f64).sqrt();
        ToyModel {
            input_dim,
            hidden_width,
            num_classes,
            w1: (0..hidden_width * input_dim)
                .map(|_| rng.gen_range(-lim1..lim1))
                .collect(),
            b1: vec![0.0; hidden_width],
            w2: (0..num_classes * fan2)
                .map(|_| rng.gen_range(-lim2..lim2))
                .collect(),
            b2: vec![0.0; num_classes],
            stats,
        }
    }

    fn classifier_fan_in(&self) -> usize {
        if self.hidden_width == 0 {
            self.input_dim
        } else {
            self.hidden_width
        }
    }

    /// Hidden activations (empty when linear) and class logits.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.input_dim);
        let hidden: Vec<f64> = (0..self.hidden_width)
            .map(|h| {
                let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
                (crate::linalg::dot(row, x) + self.b1[h]).max(0.0)
            })
            .collect();
        let features: &[f64] = if self.hidden_width == 0 { x } else { &hidden };
        let fan = self.classifier_fan_in();
        let logits: Vec<f64> = (0..self.num_classes)
            .map(|c| crate::linalg::dot(&self.w2[c * fan..(c + 1) * fan], features) + self.b2[c])
            .collect();
        (hidden, logits)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let (_, logits) = self.forward(x);
        argmax(&logits)
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dim in [self.input_dim, self.hidden_width, self.num_classes] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        let floats = self
            .stats
            .mean
            .iter()
            .chain(self.stats.std.iter())
            .chain(self.w1.iter())
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter());
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 18 {
            return Err(Error::LengthMismatch {
                expected: 18,
                found: bytes.len(),
            });
        }
        if bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic(bytes[0..4].try_into().unwrap()));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize
        };
        let (input_dim, hidden_width, num_classes) = (dim(0), dim(1), dim(2));
        let fan2 = if hidden_width == 0 { input_dim } else { hidden_width };
        let float_count =
            2 * CHANNELS + hidden_width * input_dim + hidden_width + num_classes * fan2 + num_classes;
        let expected = 18 + 8 * float_count;
        if bytes.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: bytes.len(),
            });
        }
        let mut floats = bytes[18..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |count: usize| -> Vec<f64> { floats.by_ref().take(count).collect() };
        let mean_v = take(CHANNELS);
        let std_v = take(CHANNELS);
        let w1 = take(hidden_width * input_dim);
        let b1 = take(hidden_width);
        let w2 = take(num_classes * fan2);
        let b2 = take(num_classes);
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        mean.copy_from_slice(&mean_v);
        std.copy_from_slice(&std_v);
        Ok(ToyModel {
            input_dim,
            hidden_width,
            num_classes,
            w1,
            b1,
            w2,
            b2,
            stats: ChannelStats { mean, std },
        })
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy loss with optional additive margin on the true
/// class; returns (loss, probabilities).
fn softmax_loss(logits: &[f64], label: usize, margin: Option<f64>) -> (f64, Vec<f64>) {
    let mut z = logits.to_vec();
    if let Some(m) = margin {
        z[label] -= m;
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    let loss = sum.ln() + max - z[label];
    (loss, probs)
}

struct Gradients {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(model: &ToyModel) -> Self {
        Gradients {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }
}

/// Accumulate the loss gradient of one sample into `grads`; returns loss.
fn accumulate_gradients(
    model: &ToyModel,
    x: &[f64],
    label: usize,
    margin: Option<f64>,
    grads: &mut Gradients,
) -> f64 {
    let (hidden, logits) = model.forward(x);
    let (loss, probs) = softmax_loss(&logits, label, margin);
    let fan = model.classifier_fan_in();
    let features: &[f64] = if model.hidden_width == 0 { x } else { &hidden };
    // dL/dz_c = p_c - 1[c == label]
    let mut dz = probs;
    dz[label] -= 1.0;
    for (c, &d) in dz.iter().enumerate() {
        grads.b2[c] += d;
        let row = &mut grads.w2[c * fan..(c + 1) * fan];
        for (g, &f) in row.iter_mut().zip(features) {
            *g += d * f;
        }
    }
    if model.hidden_width > 0 {
        for h in 0..model.hidden_width {
            if hidden[h] <= 0.0 {
                continue; // rectifier gate closed
            }
            let mut dh = 0.0;
            for (c, &d) in dz.iter().enumerate() {
                dh += d * model.w2[c * fan + h];
            }
            grads.b1[h] += dh;
            let row = &mut grads.w1[h * model.input_dim..(h + 1) * model.input_dim];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += dh * xi;
            }
        }
    }
    loss
}

fn sgd_step(model: &mut ToyModel, grads: &Gradients, scale: f64) {
    for (w, g) in model.w1.iter_mut().zip(&grads.w1) {
        *w -= scale * g;
    }
    for (b, g) in model.b1.iter_mut().zip(&grads.b1) {
        *b -= scale * g;
    }
    for (w, g) in model.w2.iter_mut().zip(&grads.w2) {
        *w -= scale * g;
    }
    for (b, g) in model.b2.iter_mut().zip(&grads.b2) {
        *b -= scale * g;
    }
}

/// Flatten a normalized tensor into a model input for the given rank, by
/// producing the wire representation a client would transmit.
fn rank_input(freq: &FrequencyTensor, ranks: &RankSet, i: usize, j: usize) -> Result<Vec<f64>> {
    let rep = ranks::apply_rank(freq, ranks, i, j)?;
    Ok(rep.coefficients().iter().map(|&c| c as f64).collect())
}

fn full_input(freq: &FrequencyTensor) -> Vec<f64> {
    freq.coefficients().to_vec()
}

/// Trained model plus the mean loss recorded at every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD on cross-entropy over the configured input mode.
pub fn train(dataset: &ToyDataset, ranks: &RankSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::invalid("dataset has no training samples"));
    }
    let params = ranks.params();
    if let TrainMode::FixedRank(i) = config.mode {
        if i >= params.m {
            return Err(Error::invalid(format!(
                "fixed rank id {i} out of range (m = {})",
                params.m
            )));
        }
    }
    let (gh, gw) = dataset.grid();
    let input_dim = match config.mode {
        TrainMode::FullChannels => CHANNELS * gh * gw,
        _ => params.s * gh * gw,
    };
    let stats = ChannelStats::fit(&dataset.train);
    let normalized: Vec<FrequencyTensor> = dataset
        .train
        .iter()
        .map(|s| stats.normalize(&s.freq))
        .collect();
    let labels: Vec<usize> = dataset.train.iter().map(|s| s.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ToyModel::init(
        input_dim,
        config.hidden_width,
        dataset.num_classes,
        stats,
        &mut rng,
    );

    // Static example pool for every mode except fresh per-epoch redraws.
    let static_pool: Option<Vec<(Vec<f64>, usize)>> = match (config.mode, config.frozen_augmentation) {
        (TrainMode::FullChannels, _) => Some(
            normalized
                .iter()
                .zip(&labels)
                .map(|(f, &y)| (full_input(f), y))
                .collect(),
        ),
        (TrainMode::FixedRank(i), _) => Some(
            normalized
                .iter()
                .zip(&labels)
                .map(|(f, &y)| Ok((rank_input(f, ranks, i, 0)?, y)))
                .collect::<Result<_>>()?,
        ),
        (TrainMode::RandomRank, Some(r)) => {
            let mut pool = Vec::with_capacity(normalized.len() * r);
            for (f, &y) in normalized.iter().zip(&labels) {
                for _ in 0..r {
                    let (i, j) = ranks::draw_rank(ranks, &mut rng);
                    pool.push((rank_input(f, ranks, i, j)?, y));
                }
            }
            Some(pool)
        }
        (TrainMode::RandomRank, None) => None,
    };

    let mut grads = Gradients::zeros_like(&model);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let pool: Vec<(Vec<f64>, usize)> = match &static_pool {
            Some(pool) => pool.clone(),
            None => normalized
                .iter()
                .zip(&labels)
                .map(|(f, &y)| {
                    let (i, j) = ranks::draw_rank(ranks, &mut rng);
                    Ok((rank_input(f, ranks, i, j)?, y))
                })
                .collect::<Result<_>>()?,
        };
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (x, y) = &pool[idx];
                batch_loss += accumulate_gradients(&model, x, *y, config.margin, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            sgd_step(&mut model, &grads, config.learning_rate / batch.len() as f64);
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / pool.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Input policy used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPolicy {
    FullChannels,
    /// A specific rank `(selection, permutation)`.
    Rank(usize, usize),
    /// Uniform rank draws from a dedicated seeded generator.
    Random(u64),
}

/// Classification accuracy of `model` over `samples` under `policy`.
pub fn evaluate_on(
    model: &ToyModel,
    samples: &[ToySample],
    ranks: &RankSet,
    policy: EvalPolicy,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty sample list"));
    }
    let mut rng = match policy {
        EvalPolicy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut correct = 0usize;
    for sample in samples {
        let normalized = model.stats.normalize(&sample.freq);
        let input = match policy {
            EvalPolicy::FullChannels => full_input(&normalized),
            EvalPolicy::Rank(i, j) => rank_input(&normalized, ranks, i, j)?,
            EvalPolicy::Random(_) => {
                let rng = rng.as_mut().expect("random policy has a generator");
                let (i, j) = ranks::draw_rank(ranks, rng);
                rank_input(&normalized, ranks, i, j)?
            }
        };
        if input.len() != model.input_dim {
            return Err(Error::invalid(format!(
                "policy produces inputs of dim {}, model expects {}",
                input.len(),
                model.input_dim
            )));
        }
        if model.predict(&input) == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Accuracy on the test split.
pub fn evaluate(
    model: &ToyModel,
    dataset: &ToyDataset,
    ranks: &RankSet,
    policy: EvalPolicy,
) -> Result<f64> {
    evaluate_on(model, &dataset.test, ranks, policy)
}

/// Compare the analytic loss gradient against central finite differences
/// (step 1e-5) on `checks` randomly chosen parameters; returns the largest
/// relative error.
pub fn gradient_check(
    model: &ToyModel,
    x: &[f64],
    label: usize,
    checks: usize,
    seed: u64,
) -> f64 {
    const STEP: f64 = 1e-5;
    let mut grads = Gradients::zeros_like(model);
    accumulate_gradients(model, x, label, None, &mut grads);
    let analytic = |m: &ToyModel, idx: usize| -> f64 {
        let g = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
        let sizes = [m.w1.len(), m.b1.len(), m.w2.len(), m.b2.len()];
        let mut i = idx;
        for (buf, size) in g.iter().zip(sizes) {
            if i < size {
                return buf[i];
            }
            i -= size;
        }
        unreachable!()
    };
    let perturb = |m: &mut ToyModel, idx: usize, delta: f64| {
        let sizes = [m.w1.len(), m.b1.len(), m.w2.len(), m.b2.len()];
        let mut i = idx;
        for (which, size) in sizes.into_iter().enumerate() {
            if i < size {
                match which {
                    0 => m.w1[i] += delta,
                    1 => m.b1[i] += delta,
                    2 => m.w2[i] += delta,
                    _ => m.b2[i] += delta,
                }
                return;
            }
            i -= size;
        }
        unreachable!()
    };
    let total = model.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..checks.min(total) {
        let idx = rng.gen_range(0..total);
        let mut plus = model.clone();
        perturb(&mut plus, idx, STEP);
        let mut minus = model.clone();
        perturb(&mut minus, idx, -STEP);
        let (loss_p, _) = softmax_loss(&plus.forward(x).1, label, None);
        let (loss_m, _) = softmax_loss(&minus.forward(x).1, label, None);
        let numeric = (loss_p - loss_m) / (2.0 * STEP);
        let exact = analytic(model, idx);
        let rel = (numeric - exact).abs() / (numeric.abs() + exact.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
