//! Reproducible experiment harness: the full/fixed/random accuracy
//! comparison and the recovery-attack scenario comparison, with CSV output.

use std::fmt::Write as _;

use crate::energy;
use crate::error::Result;
use crate::ranks::{self, RankSet};
use crate::recognition::{self, EvalPolicy, ToyDataset, TrainConfig, TrainMode};
use crate::recovery::{self, ScenarioResult};

/// Everything needed to rerun one experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub img_size: usize,
    pub sigma: usize,
    pub m: usize,
    pub n: usize,
    /// Augmentation factor used when training with a frozen pool; fresh
    /// per-epoch draws are used when `frozen_r` is `None`.
    pub frozen_r: Option<usize>,
    pub seeds: Vec<u64>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub recovery_lambda: f64,
    pub recovery_per_class: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            num_classes: 10,
            per_class: 50,
            img_size: 16,
            sigma: 10,
            m: 6,
            n: 1,
            frozen_r: None,
            seeds: vec![1, 2, 3],
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            hidden_width: 32,
            recovery_lambda: 100.0,
            recovery_per_class: 30,
        }
    }
}

/// One accuracy measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    /// "full", "fixed", "random", or "random-per-rank".
    pub mode: String,
    /// Selection id for fixed models and per-rank evaluations.
    pub rank: Option<usize>,
    pub seed: u64,
    pub r: usize,
    pub m: usize,
    pub n: usize,
    pub accuracy: f64,
}

/// One recovery measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub scenario: String,
    pub seed: u64,
    pub ssim: f64,
    pub psnr: f64,
}

/// Derive the prune spec and rank set from a dataset's train split.
pub fn calibrated_ranks(dataset: &ToyDataset, cfg: &ExperimentConfig, seed: u64) -> Result<RankSet> {
    let profiles: Vec<_> = dataset
        .train
        .iter()
        .map(|s| energy::channel_energy(&s.freq))
        .collect();
    let profile = energy::aggregate_profiles(&profiles)?;
    let prune = energy::make_prune_spec(&profile, cfg.sigma)?;
    ranks::build_rank_set(&prune, cfg.m, cfg.n, seed)
}

fn train_config(cfg: &ExperimentConfig, mode: TrainMode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        hidden_width: cfg.hidden_width,
        seed,
        margin: None,
        frozen_augmentation: if mode == TrainMode::RandomRank {
            cfg.frozen_r
        } else {
            None
        },
    }
}

/// Train the full-channel, per-rank fixed, and random-rank arms for every
/// seed, and evaluate each on its matching policy plus, for the random
/// model, on every individual rank.
pub fn run_accuracy_experiment(cfg: &ExperimentConfig) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::new();
    // r = 0 marks fresh per-epoch draws rather than a frozen pool.
    let r = cfg.frozen_r.unwrap_or(0);
    for &seed in &cfg.seeds {
        let dataset =
            recognition::synth_dataset(cfg.num_classes, cfg.per_class, cfg.img_size, seed)?;
        let rank_set = calibrated_ranks(&dataset, cfg, seed ^ 0x5eed)?;
        let mut push = |mode: &str, rank: Option<usize>, accuracy: f64| {
            rows.push(AccuracyRow {
                mode: mode.to_string(),
                rank,
                seed,
                r,
                m: cfg.m,
                n: cfg.n,
                accuracy,
            });
        };

        let full = recognition::train(
            &dataset,
            &rank_set,
            &train_config(cfg, TrainMode::FullChannels, seed),
        )?;
        push(
            "full",
            None,
            recognition::evaluate(&full.model, &dataset, &rank_set, EvalPolicy::FullChannels)?,
        );

        for i in 0..cfg.m {
            let fixed = recognition::train(
                &dataset,
                &rank_set,
                &train_config(cfg, TrainMode::FixedRank(i), seed),
            )?;
            push(
                "fixed",
                Some(i),
                recognition::evaluate(&fixed.model, &dataset, &rank_set, EvalPolicy::Rank(i, 0))?,
            );
        }

        let random = recognition::train(
            &dataset,
            &rank_set,
            &train_config(cfg, TrainMode::RandomRank, seed),
        )?;
        push(
            "random",
            None,
            recognition::evaluate(
                &random.model,
                &dataset,
                &rank_set,
                EvalPolicy::Random(seed ^ 0xe7a1),
            )?,
        );
        for i in 0..cfg.m {
            push(
                "random-per-rank",
                Some(i),
                recognition::evaluate(&random.model, &dataset, &rank_set, EvalPolicy::Rank(i, 0))?,
            );
        }
    }
    Ok(rows)
}

/// Run the five recovery arms for every seed.
pub fn run_recovery_experiment(cfg: &ExperimentConfig) -> Result<Vec<RecoveryRow>> {
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let dataset = recognition::synth_dataset(
            cfg.num_classes,
            cfg.recovery_per_class,
            cfg.img_size,
            seed ^ 0xa77ac,
        )?;
        let true_ranks = calibrated_ranks(&dataset, cfg, seed ^ 0x5eed)?;
        let conjectured = calibrated_ranks(&dataset, cfg, seed ^ 0xbadc0de)?;
        let results = recovery::attack_scenarios(
            &dataset,
            &true_ranks,
            &conjectured,
            cfg.recovery_lambda,
            seed,
        )?;
        for ScenarioResult {
            scenario,
            ssim,
            psnr,
        } in results
        {
            rows.push(RecoveryRow {
                scenario: scenario.name().to_string(),
                seed,
                ssim,
                psnr,
            });
        }
    }
    Ok(rows)
}

/// Aggregate view of one accuracy run, as used by the Table-2-style checks.
#[derive(Debug, Clone, Copy)]
pub struct AccuracySummary {
    pub mean_full: f64,
    /// Mean over seeds and rank ids of the fixed-rank models' accuracies.
    pub mean_fixed: f64,
    /// Mean over seeds of the random-policy accuracy of the random model.
    pub mean_random: f64,
    /// Mean over seeds of (max − min) across fixed-rank models.
    pub fixed_spread: f64,
    /// Mean over seeds of (max − min) across the random model's per-rank
    /// accuracies.
    pub random_spread: f64,
}

pub fn summarize_accuracy(rows: &[AccuracyRow]) -> AccuracySummary {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mean = |mode: &str| {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.accuracy)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let spread = |mode: &str| {
        let mut total = 0.0;
        for &seed in &seeds {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.mode == mode && r.seed == seed)
                .map(|r| r.accuracy)
                .collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            total += hi - lo;
        }
        total / seeds.len().max(1) as f64
    };
    AccuracySummary {
        mean_full: mean("full"),
        mean_fixed: mean("fixed"),
        mean_random: mean("random"),
        fixed_spread: spread("fixed"),
        random_spread: spread("random-per-rank"),
    }
}

/// Mean SSIM per scenario name.
pub fn mean_scenario_ssim(rows: &[RecoveryRow], scenario: &str) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.scenario == scenario)
        .map(|r| r.ssim)
        .collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("mode,rank,seed,r,m,n,accuracy\n");
    for row in rows {
        let rank = row.rank.map_or(String::new(), |r| r.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{:.4}",
            row.mode, rank, row.seed, row.r, row.m, row.n, row.accuracy
        )
        .unwrap();
    }
    out
}

pub fn recovery_csv(rows: &[RecoveryRow]) -> String {
    let mut out = String::from("scenario,seed,ssim,psnr\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.4}",
            row.scenario, row.seed, row.ssim, row.psnr
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            num_classes: 3,
            per_class: 8,
            epochs: 2,
            seeds: vec![100],
            recovery_per_class: 6,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn accuracy_rows_cover_all_arms() {
        let cfg = tiny_config();
        let rows = run_accuracy_experiment(&cfg).unwrap();
        // 1 full + m fixed + 1 random + m per-rank rows per seed.
        assert_eq!(rows.len(), (1 + cfg.m + 1 + cfg.m) * cfg.seeds.len());
        let csv = accuracy_csv(&rows);
        assert_eq!(csv.lines().count(), rows.len() + 1);
        assert!(csv.starts_with("mode,rank,seed,r,m,n,accuracy"));
    }

    #[test]
    fn recovery_rows_cover_all_scenarios() {
        let cfg = tiny_config();
        let rows = run_recovery_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 5 * cfg.seeds.len());
        let csv = recovery_csv(&rows);
        assert!(csv.contains("white-box"));
        assert!(csv.contains("control"));
    }

    #[test]
    fn experiments_are_deterministic() {
        let cfg = tiny_config();
        assert_eq!(
            run_accuracy_experiment(&cfg).unwrap(),
            run_accuracy_experiment(&cfg).unwrap()
        );
        assert_eq!(
            run_recovery_experiment(&cfg).unwrap(),
            run_recovery_experiment(&cfg).unwrap()
        );
    }
}
