//! The `train` and `cv` subcommands: dataset ingestion, matrix bank,
//! feature extraction, training, and artifact output (checkpoint, CSV,
//! manifest).

use clap::Args;
use csl_core::data::{load_dataset, synthesize_dataset, Dataset};
use csl_core::error::{Error, Result};
use csl_core::eval::{
    export_csv, run_cv, run_grid, run_holdout, write_manifest, DatasetInfo, FoldId,
    Manifest, MetricsRecord, NetworkInfo, Protocol, RunSeeds, TrainInfo,
};
use csl_core::features::{parse_combo_selector, ChannelCombo};
use csl_core::nn::{save_checkpoint, NetworkSpec, OptimizerKind, TrainConfig};
use csl_core::sensing::{compression_ratio, MatrixKind, SensingMatrixSpec};
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Labeled dataset directory holding positive/ and negative/ subfolders.
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub dataset: Option<PathBuf>,

    /// Generate a synthetic dataset with N samples per class instead.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,

    /// Synthetic task difficulty in [0, 1]; 0 is the easiest setting.
    #[arg(long, default_value_t = 0.5)]
    pub difficulty: f64,

    /// Seed for the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub seed_data: u64,

    /// Write the ingested images as PNGs under OUT/images for inspection.
    #[arg(long)]
    pub dump_images: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match (&self.dataset, self.synthetic) {
            (Some(dir), None) => load_dataset(dir),
            (None, Some(n)) => synthesize_dataset(n, self.seed_data, self.difficulty),
            _ => Err(Error::config("choose exactly one of --dataset or --synthetic")),
        }
    }
}

#[derive(Args, Debug)]
pub struct NetArgs {
    /// Compressed feature size M (network input is 3 x M x M).
    #[arg(long, default_value_t = 64)]
    pub feature_size: usize,

    /// Conv block output channels.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub conv_channels: Vec<usize>,

    /// Hidden fully-connected widths.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub fc_hidden: Vec<usize>,
}

impl NetArgs {
    fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_shape: (3, self.feature_size, self.feature_size),
            conv_channels: self.conv_channels.clone(),
            fc_hidden: self.fc_hidden.clone(),
        }
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,

    #[arg(long, default_value_t = 32)]
    pub batch: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    /// Optimizer: adam or momentum.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,

    /// Momentum coefficient (momentum optimizer only).
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    /// Skip per-channel feature standardization.
    #[arg(long)]
    pub no_normalize: bool,
}

impl FitArgs {
    fn config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::default(),
            "momentum" => OptimizerKind::Momentum { momentum: self.momentum },
            other => {
                return Err(Error::config(format!(
                    "unknown optimizer {other:?}; use adam or momentum"
                )))
            }
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            seed: 0,
            optimizer,
        })
    }
}

#[derive(Args, Debug)]
pub struct SeedArgs {
    /// Seed for the sensing-matrix bank.
    #[arg(long, default_value_t = 1)]
    pub seed_matrix: u64,

    /// Seed for the fold plan / holdout split.
    #[arg(long, default_value_t = 2)]
    pub seed_split: u64,

    /// Seed for network initialization and shuffling.
    #[arg(long, default_value_t = 3)]
    pub seed_init: u64,
}

impl SeedArgs {
    fn seeds(&self) -> RunSeeds {
        RunSeeds { matrix: self.seed_matrix, split: self.seed_split, init: self.seed_init }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Channel combo (three letters from {G, C, T}).
    #[arg(long, default_value = "GCT")]
    pub combo: String,

    /// Fraction of each class held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,

    #[command(flatten)]
    pub net: NetArgs,

    #[command(flatten)]
    pub fit: FitArgs,

    #[command(flatten)]
    pub seeds: SeedArgs,

    /// Output directory for checkpoint, CSV and manifest.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Combo selector: one combo (GCT), a comma list (GCT,CCC), or `all`
    /// for the 10 canonical multisets.
    #[arg(long, default_value = "GCT")]
    pub combo: String,

    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,

    #[command(flatten)]
    pub net: NetArgs,

    #[command(flatten)]
    pub fit: FitArgs,

    #[command(flatten)]
    pub seeds: SeedArgs,

    /// Output directory for CSV and manifest.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn ratio_for(spec: &NetworkSpec, dataset: &Dataset) -> f64 {
    let (h, w) = dataset.samples[0].image.dim();
    let m = spec.input_shape.1;
    let row = SensingMatrixSpec::new(MatrixKind::Gaussian, m, h, 0);
    let col = SensingMatrixSpec::new(MatrixKind::Gaussian, m, w, 0);
    compression_ratio(&row, &col, h, w)
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let combo: ChannelCombo = args.combo.parse()?;
    let dataset = args.data.load()?;
    if dataset.is_empty() {
        return Err(Error::data("dataset contains no decodable samples"));
    }
    let spec = args.net.spec();
    spec.validate()?;
    let config = args.fit.config()?;
    let seeds = args.seeds.seeds();
    prepare_out(&args.out)?;
    if args.data.dump_images {
        dataset.dump_png(&args.out.join("images"))?;
    }

    let outcome = run_holdout(
        &dataset,
        combo,
        &spec,
        &config,
        args.test_frac,
        seeds,
        !args.fit.no_normalize,
    )?;

    let checkpoint = args.out.join("checkpoint.net");
    save_checkpoint(&checkpoint, &spec, &outcome.state)?;
    let csv = args.out.join("metrics.csv");
    export_csv(std::slice::from_ref(&outcome.record), &csv)?;
    let manifest = Manifest {
        command: "train".into(),
        dataset: DatasetInfo::from_dataset(&dataset),
        seeds,
        combos: vec![combo.to_string()],
        protocol: Protocol::Holdout { test_fraction: args.test_frac },
        network: NetworkInfo::from_spec(&spec),
        train: TrainInfo::from_config(&config),
        normalize: !args.fit.no_normalize,
        compression_ratio: ratio_for(&spec, &dataset),
        fold_plan_hash: outcome.split_hash.clone(),
        outputs: vec!["checkpoint.net".into(), "metrics.csv".into()],
    };
    write_manifest(&manifest, &args.out.join("manifest.json"))?;

    println!(
        "holdout: combo={} accuracy={:.4} val_loss={:.4} ({} epochs, {} train / {} test)",
        combo,
        outcome.record.accuracy,
        outcome.record.val_loss,
        config.epochs,
        dataset.len() - outcome.test_size,
        outcome.test_size,
    );
    Ok(())
}

pub fn cmd_cv(args: CvArgs) -> Result<()> {
    let combos = parse_combo_selector(&args.combo)?;
    let dataset = args.data.load()?;
    if dataset.is_empty() {
        return Err(Error::data("dataset contains no decodable samples"));
    }
    let spec = args.net.spec();
    spec.validate()?;
    let config = args.fit.config()?;
    let seeds = args.seeds.seeds();
    prepare_out(&args.out)?;
    if args.data.dump_images {
        dataset.dump_png(&args.out.join("images"))?;
    }

    let mut records: Vec<MetricsRecord> = Vec::new();
    let fold_plan_hash;
    if combos.len() == 1 {
        let outcome =
            run_cv(&dataset, combos[0], &spec, &config, args.k, seeds, !args.fit.no_normalize)?;
        fold_plan_hash = outcome.fold_plan_hash.clone();
        print_summary(combos[0], &outcome.summary);
        push_with_mean(&mut records, outcome.records, combos[0], &outcome.summary, seeds.init, config.epochs);
    } else {
        let grid = run_grid(
            &dataset,
            &combos,
            &spec,
            &config,
            args.k,
            seeds,
            !args.fit.no_normalize,
        )?;
        fold_plan_hash = grid.fold_plan_hash.clone();
        for row in grid.rows {
            print_summary(row.combo, &row.summary);
            push_with_mean(&mut records, row.records, row.combo, &row.summary, seeds.init, config.epochs);
        }
    }

    let csv = args.out.join("metrics.csv");
    export_csv(&records, &csv)?;
    let manifest = Manifest {
        command: "cv".into(),
        dataset: DatasetInfo::from_dataset(&dataset),
        seeds,
        combos: combos.iter().map(|c| c.to_string()).collect(),
        protocol: Protocol::KFold { k: args.k },
        network: NetworkInfo::from_spec(&spec),
        train: TrainInfo::from_config(&config),
        normalize: !args.fit.no_normalize,
        compression_ratio: ratio_for(&spec, &dataset),
        fold_plan_hash,
        outputs: vec!["metrics.csv".into()],
    };
    write_manifest(&manifest, &args.out.join("manifest.json"))?;
    Ok(())
}

fn print_summary(combo: ChannelCombo, summary: &csl_core::eval::CvSummary) {
    println!(
        "cv: combo={combo} accuracy={:.4} ± {:.4} val_loss={:.4} ± {:.4}",
        summary.mean_accuracy,
        summary.std_accuracy,
        summary.mean_val_loss,
        summary.std_val_loss
    );
}

fn push_with_mean(
    records: &mut Vec<MetricsRecord>,
    fold_records: Vec<MetricsRecord>,
    combo: ChannelCombo,
    summary: &csl_core::eval::CvSummary,
    seed: u64,
    epochs: usize,
) {
    records.extend(fold_records);
    records.push(MetricsRecord {
        combo: Some(combo),
        fold: FoldId::Mean,
        accuracy: summary.mean_accuracy,
        val_loss: summary.mean_val_loss,
        seed,
        epochs_run: epochs,
    });
}
