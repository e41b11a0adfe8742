//! Command-line surface: calibration, rank generation, protection, quality
//! reports, and the experiment harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dct;
use crate::energy::{self, PruneSpec};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::image::{self, SpatialImage};
use crate::metrics;
use crate::pfpr;
use crate::ranks::{self, RankSet, DEFAULT_PARAMS};

#[derive(Parser)]
#[command(
    name = "partialface",
    version,
    about = "Frequency-channel pruning and randomized channel-subset protection for face images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    #[default]
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Measure channel energies over a directory of PGM images and write a
    /// prune spec for the highest-energy channels.
    Calibrate {
        /// Directory of calibration images (PGM).
        image_dir: PathBuf,
        /// Number of channels to prune.
        #[arg(long, default_value_t = DEFAULT_PARAMS.sigma)]
        sigma: usize,
        /// Output prune-spec path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a rank set (selections and permutations) from a prune spec.
    MakeRanks {
        /// Prune-spec file produced by `calibrate`.
        #[arg(long = "prune-spec")]
        prune_spec: PathBuf,
        /// Number of selections (must divide the high-channel count).
        #[arg(long, default_value_t = DEFAULT_PARAMS.m)]
        m: usize,
        /// Number of permutations.
        #[arg(long, default_value_t = DEFAULT_PARAMS.n)]
        n: usize,
        /// Augmentation factor recorded in the rank file.
        #[arg(long, default_value_t = DEFAULT_PARAMS.r)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output rank-file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample protected representations of one image and write them as
    /// PFPR containers.
    Protect {
        /// Input image (PGM).
        image: PathBuf,
        /// Rank file produced by `make-ranks`.
        #[arg(long)]
        ranks: PathBuf,
        /// Number of representations to draw; defaults to the rank file's r.
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the PFPR files.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Print quality/privacy reports for the pruned-only and drawn-subset
    /// reconstructions of one image.
    Report {
        /// Input image (PGM).
        image: PathBuf,
        /// Rank file produced by `make-ranks`.
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: ReportFormat,
    },
    /// Run the accuracy and recovery experiments and emit CSV results.
    Experiment {
        /// Output directory for accuracy.csv and recovery.csv.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated experiment seeds.
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 50)]
        per_class: usize,
        #[arg(long = "img-size", default_value_t = 16)]
        img_size: usize,
        #[arg(long, default_value_t = DEFAULT_PARAMS.sigma)]
        sigma: usize,
        /// Selection counts to sweep.
        #[arg(long = "m-values", default_value = "6")]
        m_values: String,
        /// Permutation counts to sweep.
        #[arg(long = "n-values", default_value = "1")]
        n_values: String,
        /// Frozen augmentation factors to sweep; 0 trains the random arm on
        /// fresh per-epoch draws instead of a frozen pool.
        #[arg(long = "r-values", default_value = "0")]
        r_values: String,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long = "hidden", default_value_t = 32)]
        hidden_width: usize,
        #[arg(long = "lr", default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long = "batch", default_value_t = 32)]
        batch_size: usize,
        #[arg(long = "lambda", default_value_t = 100.0)]
        recovery_lambda: f64,
        #[arg(long = "recovery-per-class", default_value_t = 30)]
        recovery_per_class: usize,
        #[arg(long = "skip-recovery", default_value_t = false)]
        skip_recovery: bool,
        #[arg(long = "skip-accuracy", default_value_t = false)]
        skip_accuracy: bool,
    },
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Calibrate {
            image_dir,
            sigma,
            out,
        } => calibrate(&image_dir, sigma, &out),
        Command::MakeRanks {
            prune_spec,
            m,
            n,
            r,
            seed,
            out,
        } => make_ranks(&prune_spec, m, n, r, seed, &out),
        Command::Protect {
            image,
            ranks,
            r,
            seed,
            out_dir,
        } => protect(&image, &ranks, r, seed, &out_dir),
        Command::Report {
            image,
            ranks,
            seed,
            format,
        } => report(&image, &ranks, seed, format),
        Command::Experiment {
            out,
            seeds,
            classes,
            per_class,
            img_size,
            sigma,
            m_values,
            n_values,
            r_values,
            epochs,
            hidden_width,
            learning_rate,
            batch_size,
            recovery_lambda,
            recovery_per_class,
            skip_recovery,
            skip_accuracy,
        } => {
            let base = ExperimentConfig {
                num_classes: classes,
                per_class,
                img_size,
                sigma,
                seeds: parse_u64_list(&seeds)?,
                epochs,
                hidden_width,
                learning_rate,
                batch_size,
                recovery_lambda,
                recovery_per_class,
                ..ExperimentConfig::default()
            };
            run_experiment(
                &out,
                base,
                parse_usize_list(&m_values)?,
                parse_usize_list(&n_values)?,
                parse_usize_list(&r_values)?,
                skip_recovery,
                skip_accuracy,
            )
        }
    }
}

/// Pipeline applied to every input image: 8× upsampling, then the
/// blockwise transform.
fn image_to_tensor(img: &SpatialImage) -> Result<dct::FrequencyTensor> {
    dct::dct_forward(&image::upsample_8x(img)?)
}

fn calibrate(image_dir: &Path, sigma: usize, out: &Path) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(image_dir)
        .map_err(|e| Error::io(image_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut profiles = Vec::new();
    for path in &paths {
        match image::load_pgm(path).and_then(|img| image_to_tensor(&img)) {
            Ok(freq) => profiles.push(energy::channel_energy(&freq)),
            Err(err) => eprintln!("warning: skipping {}: {err}", path.display()),
        }
    }
    if profiles.is_empty() {
        return Err(Error::SpecParse {
            kind: "calibration directory",
            detail: format!("no readable images in {}", image_dir.display()),
        });
    }
    let profile = energy::aggregate_profiles(&profiles)?;
    let spec = energy::make_prune_spec(&profile, sigma)?;
    spec.save(out)?;
    let retention = energy::energy_retention(&profile, spec.low_indices());
    println!("images={}", profiles.len());
    println!("sigma={sigma}");
    println!("low_energy_retention={retention:.6}");
    println!("wrote {}", out.display());
    Ok(())
}

fn make_ranks(prune_spec: &Path, m: usize, n: usize, r: usize, seed: u64, out: &Path) -> Result<()> {
    let prune = PruneSpec::load(prune_spec)?;
    let rank_set = ranks::build_rank_set(&prune, m, n, seed)?.with_augmentation(r);
    rank_set.save(out)?;
    let params = rank_set.params();
    println!(
        "sigma={} s={} r={} m={} n={}",
        params.sigma, params.s, params.r, params.m, params.n
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn protect(image_path: &Path, ranks_path: &Path, r: Option<usize>, seed: u64, out_dir: &Path) -> Result<()> {
    let rank_set = RankSet::load(ranks_path)?;
    let img = image::load_pgm(image_path)?;
    let freq = image_to_tensor(&img)?;
    let r = r.unwrap_or(rank_set.params().r);
    if r == 0 {
        return Err(Error::invalid("r must be >= 1"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps = ranks::augment(&freq, &rank_set, r, &mut rng)?;
    for rep in &reps {
        // Nonce-based names: nothing in the filename hints at the drawn rank.
        let nonce: u64 = rng.gen();
        let path = out_dir.join(format!("rep-{nonce:016x}.pfpr"));
        fs::write(&path, pfpr::encode(rep)?).map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report(image_path: &Path, ranks_path: &Path, seed: u64, format: ReportFormat) -> Result<()> {
    let rank_set = RankSet::load(ranks_path)?;
    let img = image::upsample_8x(&image::load_pgm(image_path)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pruned = metrics::pruned_only_report(&img, rank_set.prune())?;
    let subset = metrics::protection_report(&img, rank_set.prune(), &rank_set, &mut rng)?;
    match format {
        ReportFormat::Text => {
            print!("{}", pruned.to_text("pruned_only"));
            print!("{}", subset.to_text("subset"));
        }
        ReportFormat::Json => {
            println!(
                "{{\"pruned_only\": {}, \"subset\": {}}}",
                pruned.to_json(),
                subset.to_json()
            );
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_experiment(
    out: &Path,
    base: ExperimentConfig,
    m_values: Vec<usize>,
    n_values: Vec<usize>,
    r_values: Vec<usize>,
    skip_recovery: bool,
    skip_accuracy: bool,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut accuracy_rows = Vec::new();
    let mut recovery_rows = Vec::new();
    for &m in &m_values {
        for &n in &n_values {
            if !skip_accuracy {
                for &r in &r_values {
                    let cfg = ExperimentConfig {
                        m,
                        n,
                        frozen_r: if r == 0 { None } else { Some(r) },
                        ..base.clone()
                    };
                    accuracy_rows.extend(experiment::run_accuracy_experiment(&cfg)?);
                }
            }
            if !skip_recovery {
                let cfg = ExperimentConfig {
                    m,
                    n,
                    ..base.clone()
                };
                recovery_rows.extend(experiment::run_recovery_experiment(&cfg)?);
            }
        }
    }
    if !skip_accuracy {
        let path = out.join("accuracy.csv");
        fs::write(&path, experiment::accuracy_csv(&accuracy_rows))
            .map_err(|e| Error::io(&path, e))?;
        let summary = experiment::summarize_accuracy(&accuracy_rows);
        println!("accuracy: full={:.4} fixed={:.4} random={:.4}", summary.mean_full, summary.mean_fixed, summary.mean_random);
        println!(
            "spread: fixed={:.4} random-per-rank={:.4}",
            summary.fixed_spread, summary.random_spread
        );
        println!("wrote {}", path.display());
    }
    if !skip_recovery {
        let path = out.join("recovery.csv");
        fs::write(&path, experiment::recovery_csv(&recovery_rows))
            .map_err(|e| Error::io(&path, e))?;
        for scenario in ["control", "pruned-only", "enhanced", "white-box", "black-box"] {
            println!(
                "recovery ssim {scenario}={:.4}",
                experiment::mean_scenario_ssim(&recovery_rows, scenario)
            );
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("invalid list entry {tok:?}")))
        })
        .collect()
}

fn parse_u64_list(raw: &str) -> Result<Vec<u64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("invalid list entry {tok:?}")))
        })
        .collect()
}
