// Temporary tuning probe: accuracy trajectories of the training arms.
use partialface::experiment::{calibrated_ranks, ExperimentConfig};
use partialface::recognition::{self, EvalPolicy, TrainConfig, TrainMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(120);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.03);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(16);
    let hidden: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(48);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);

    let cfg = ExperimentConfig::default();
    let ds = recognition::synth_dataset(cfg.num_classes, cfg.per_class, cfg.img_size, seed).unwrap();
    let ranks = calibrated_ranks(&ds, &cfg, seed ^ 0x5eed).unwrap();

    for checkpoint in [epochs / 4, epochs / 2, 3 * epochs / 4, epochs] {
        let mut line = format!("epochs={checkpoint:4}");
        for (name, mode) in [
            ("fixed0", TrainMode::FixedRank(0)),
            ("fixed4", TrainMode::FixedRank(4)),
            ("random", TrainMode::RandomRank),
        ] {
            let config = TrainConfig {
                mode,
                learning_rate: lr,
                epochs: checkpoint,
                batch_size: batch,
                hidden_width: hidden,
                seed,
                margin: None,
                frozen_augmentation: None,
            };
            let out = recognition::train(&ds, &ranks, &config).unwrap();
            let policy = match mode {
                TrainMode::FixedRank(i) => EvalPolicy::Rank(i, 0),
                _ => EvalPolicy::Random(seed ^ 0xe7a1),
            };
            let acc = recognition::evaluate(&out.model, &ds, &ranks, policy).unwrap();
            let train_acc =
                recognition::evaluate_on(&out.model, &ds.train, &ranks, policy).unwrap();
            line.push_str(&format!(
                "  {name}: test={acc:.3} train={train_acc:.3}"
            ));
        }
        println!("{line}");
    }
}
