//! Stratified splitting, k-fold cross-validation, experiment grids and
//! metrics export.
//!
//! Test folds are class-balanced by construction: every fold holds exactly
//! `floor(min_class_size / k)` samples of each class, and the per-class
//! surplus goes to a training-only pool that joins every fold's training
//! set but never a test fold. Feature normalization statistics are computed
//! from training indices only.

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::features::{
    compute_stats, extract_channels, normalize, BankSeeds, ChannelCombo, FeatureTensor,
    MatrixBank,
};
use crate::nn::{
    evaluate, init_network, train, EpochStats, LabeledSample, NetworkSpec, NetworkState,
    TrainConfig,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::util::fnv1a64;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

/// A stratified partition of sample indices into k class-balanced folds
/// plus a training-only surplus pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    /// Surplus samples used for training in every fold, never for testing.
    pub pool: Vec<usize>,
    /// Per-fold per-class counts; equal across folds and classes by
    /// construction.
    pub class_counts: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Content hash of the partition, reported in manifests so paired runs
    /// can prove they shared a plan.
    pub fn plan_hash(&self) -> String {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.k as u64).to_le_bytes());
        for fold in &self.folds {
            bytes.extend_from_slice(&u64::MAX.to_le_bytes());
            for &i in fold {
                bytes.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        for &i in &self.pool {
            bytes.extend_from_slice(&(i as u64).to_le_bytes());
        }
        format!("{:016x}", fnv1a64(&bytes))
    }

    /// Training indices for fold `f`: all other folds plus the pool,
    /// ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .chain(self.pool.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

fn group_by_class(labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    if labels.is_empty() {
        return Err(Error::data("no samples to split"));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    if let Some(c) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::data(format!("class {c} has no samples")));
    }
    Ok(groups)
}

/// Stratified holdout split. Each class contributes
/// `round(test_fraction * class_size)` test samples (clamped so that both
/// sides keep at least one sample per class); deterministic in `seed`.
pub fn holdout_split(
    labels: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let groups = group_by_class(labels)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        if group.len() < 2 {
            return Err(Error::data(format!(
                "class {class} has {} samples; need at least 2 to split",
                group.len()
            )));
        }
        let mut shuffled = group.clone();
        let mut rng = SplitMix64::new(derive_seed(seed, class as u64));
        rng.shuffle(&mut shuffled);
        let t = ((test_fraction * group.len() as f64).round() as usize)
            .clamp(1, group.len() - 1);
        test.extend_from_slice(&shuffled[..t]);
        train.extend_from_slice(&shuffled[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified k-fold plan: per class, samples are shuffled by the seed and
/// dealt round-robin to folds until every fold holds
/// `floor(min_class_size / k)` of that class; the surplus goes to the pool.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!("k must be >= 2, got {k}")));
    }
    let groups = group_by_class(labels)?;
    let min_class = groups.iter().map(|g| g.len()).min().unwrap();
    if min_class < k {
        return Err(Error::config(format!(
            "k = {k} exceeds the smallest class size {min_class}"
        )));
    }
    let per_fold = min_class / k;
    let mut folds = vec![Vec::new(); k];
    let mut pool = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        let mut shuffled = group.clone();
        let mut rng = SplitMix64::new(derive_seed(seed, class as u64));
        rng.shuffle(&mut shuffled);
        for (i, &idx) in shuffled.iter().enumerate() {
            if i < k * per_fold {
                folds[i % k].push(idx);
            } else {
                pool.push(idx);
            }
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    pool.sort_unstable();
    let class_counts = folds
        .iter()
        .map(|fold| {
            let mut counts = vec![0usize; groups.len()];
            for &i in fold {
                counts[labels[i]] += 1;
            }
            counts
        })
        .collect();
    Ok(FoldPlan { k, folds, pool, class_counts })
}

/// Which slice of the protocol a metrics row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldId {
    Fold(usize),
    Holdout,
    /// Aggregate row appended after per-fold rows.
    Mean,
}

impl std::fmt::Display for FoldId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FoldId::Fold(i) => write!(f, "{i}"),
            FoldId::Holdout => write!(f, "holdout"),
            FoldId::Mean => write!(f, "mean"),
        }
    }
}

/// Accuracy and validation loss for one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// `None` renders as "none" (e.g. uncompressed baselines).
    pub combo: Option<ChannelCombo>,
    pub fold: FoldId,
    pub accuracy: f64,
    pub val_loss: f64,
    pub seed: u64,
    pub epochs_run: usize,
}

/// Mean and sample standard deviation over per-fold records.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CvSummary {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_val_loss: f64,
    pub std_val_loss: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summarize per-fold records (ignores rows that are already aggregates).
pub fn summarize(records: &[MetricsRecord]) -> CvSummary {
    let acc: Vec<f64> = records
        .iter()
        .filter(|r| r.fold != FoldId::Mean)
        .map(|r| r.accuracy)
        .collect();
    let loss: Vec<f64> = records
        .iter()
        .filter(|r| r.fold != FoldId::Mean)
        .map(|r| r.val_loss)
        .collect();
    let (mean_accuracy, std_accuracy) = mean_std(&acc);
    let (mean_val_loss, std_val_loss) = mean_std(&loss);
    CvSummary { mean_accuracy, std_accuracy, mean_val_loss, std_val_loss }
}

/// Explicit seeds for the three random streams of an experiment.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RunSeeds {
    /// Sensing-matrix bank.
    pub matrix: u64,
    /// Fold plan / holdout split.
    pub split: u64,
    /// Network initialization and shuffle streams.
    pub init: u64,
}

/// Evaluation protocol for a run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Holdout { test_fraction: f64 },
    KFold { k: usize },
}

/// Extract raw (unnormalized) feature tensors for every sample.
pub fn extract_features(
    dataset: &Dataset,
    combo: ChannelCombo,
    bank: &MatrixBank,
) -> Result<Vec<FeatureTensor>> {
    dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| extract_channels(&s.image, combo, bank, i))
        .collect()
}

/// Train on `train_idx`, evaluate on `val_idx`. Normalization statistics
/// come from the training subset only.
fn train_and_eval(
    raw: &[FeatureTensor],
    labels: &[usize],
    train_idx: &[usize],
    val_idx: &[usize],
    spec: &NetworkSpec,
    config: &TrainConfig,
    init_seed: u64,
    normalize_features: bool,
) -> Result<(crate::nn::EvalMetrics, NetworkState, Vec<EpochStats>)> {
    let pick = |idx: &[usize]| -> Vec<FeatureTensor> {
        idx.iter().map(|&i| raw[i].clone()).collect()
    };
    let (train_t, val_t) = if normalize_features {
        let train_refs: Vec<&FeatureTensor> = train_idx.iter().map(|&i| &raw[i]).collect();
        let stats = compute_stats(&train_refs);
        (
            train_idx.iter().map(|&i| normalize(&raw[i], &stats)).collect::<Vec<_>>(),
            val_idx.iter().map(|&i| normalize(&raw[i], &stats)).collect::<Vec<_>>(),
        )
    } else {
        (pick(train_idx), pick(val_idx))
    };
    let train_data: Vec<LabeledSample<'_>> = train_t
        .iter()
        .zip(train_idx.iter())
        .map(|(t, &i)| (&t.channels, labels[i]))
        .collect();
    let val_data: Vec<LabeledSample<'_>> = val_t
        .iter()
        .zip(val_idx.iter())
        .map(|(t, &i)| (&t.channels, labels[i]))
        .collect();
    let mut state = init_network(spec, init_seed)?;
    let shuffled_config = *config;
    let epoch_stats = train(&mut state, spec, &shuffled_config, &train_data, &val_data)?;
    let metrics = evaluate(&state, spec, &val_data)?;
    Ok((metrics, state, epoch_stats))
}

fn build_bank_for(
    dataset: &Dataset,
    combo: ChannelCombo,
    spec: &NetworkSpec,
    matrix_seed: u64,
) -> Result<MatrixBank> {
    let (c, m, m2) = spec.input_shape;
    if c != 3 || m != m2 {
        return Err(Error::config(format!(
            "pipeline expects a (3, M, M) network input, got {:?}",
            spec.input_shape
        )));
    }
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| Error::data("dataset is empty"))?;
    let (h, w) = first.image.dim();
    MatrixBank::build(m, h, w, BankSeeds::from_master(matrix_seed), &combo.distinct_kinds())
}

/// Outcome of [`run_cv`].
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: CvSummary,
    pub fold_plan_hash: String,
}

/// k-fold cross-validation of one channel combo: for each fold, train on
/// the other folds plus the pool and evaluate on the held-out fold.
pub fn run_cv(
    dataset: &Dataset,
    combo: ChannelCombo,
    spec: &NetworkSpec,
    config: &TrainConfig,
    k: usize,
    seeds: RunSeeds,
    normalize_features: bool,
) -> Result<CvOutcome> {
    let labels = dataset.labels();
    let plan = stratified_kfold(&labels, k, seeds.split)?;
    let bank = build_bank_for(dataset, combo, spec, seeds.matrix)?;
    let raw = extract_features(dataset, combo, &bank)?;
    cv_over_plan(&raw, &labels, &plan, combo, spec, config, seeds, normalize_features)
}

fn cv_over_plan(
    raw: &[FeatureTensor],
    labels: &[usize],
    plan: &FoldPlan,
    combo: ChannelCombo,
    spec: &NetworkSpec,
    config: &TrainConfig,
    seeds: RunSeeds,
    normalize_features: bool,
) -> Result<CvOutcome> {
    let mut records = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let train_idx = plan.train_indices(f);
        let val_idx = &plan.folds[f];
        let mut cfg = *config;
        cfg.seed = derive_seed(seeds.init, (2 * f + 1) as u64);
        let (metrics, _, _) = train_and_eval(
            raw,
            labels,
            &train_idx,
            val_idx,
            spec,
            &cfg,
            derive_seed(seeds.init, (2 * f) as u64),
            normalize_features,
        )
        .map_err(|e| match e {
            Error::Divergence { epoch, detail } => Error::Divergence {
                epoch,
                detail: format!("fold {f}: {detail}"),
            },
            other => other,
        })?;
        records.push(MetricsRecord {
            combo: Some(combo),
            fold: FoldId::Fold(f),
            accuracy: metrics.accuracy,
            val_loss: metrics.mean_loss,
            seed: seeds.init,
            epochs_run: config.epochs,
        });
    }
    let summary = summarize(&records);
    Ok(CvOutcome { records, summary, fold_plan_hash: plan.plan_hash() })
}

/// Outcome of [`run_holdout`]: the holdout record plus the trained network
/// (for checkpointing) and its epoch curve.
#[derive(Debug)]
pub struct HoldoutOutcome {
    pub record: MetricsRecord,
    pub state: NetworkState,
    pub epoch_stats: Vec<EpochStats>,
    pub split_hash: String,
    pub test_size: usize,
}

/// Single stratified holdout run of one combo.
pub fn run_holdout(
    dataset: &Dataset,
    combo: ChannelCombo,
    spec: &NetworkSpec,
    config: &TrainConfig,
    test_fraction: f64,
    seeds: RunSeeds,
    normalize_features: bool,
) -> Result<HoldoutOutcome> {
    let labels = dataset.labels();
    let (train_idx, test_idx) = holdout_split(&labels, test_fraction, seeds.split)?;
    let bank = build_bank_for(dataset, combo, spec, seeds.matrix)?;
    let raw = extract_features(dataset, combo, &bank)?;
    let mut cfg = *config;
    cfg.seed = derive_seed(seeds.init, 1);
    let (metrics, state, epoch_stats) = train_and_eval(
        &raw,
        &labels,
        &train_idx,
        &test_idx,
        spec,
        &cfg,
        derive_seed(seeds.init, 0),
        normalize_features,
    )?;
    let mut bytes = Vec::new();
    for &i in train_idx.iter().chain(test_idx.iter()) {
        bytes.extend_from_slice(&(i as u64).to_le_bytes());
    }
    Ok(HoldoutOutcome {
        record: MetricsRecord {
            combo: Some(combo),
            fold: FoldId::Holdout,
            accuracy: metrics.accuracy,
            val_loss: metrics.mean_loss,
            seed: seeds.init,
            epochs_run: config.epochs,
        },
        state,
        epoch_stats,
        split_hash: format!("{:016x}", fnv1a64(&bytes)),
        test_size: test_idx.len(),
    })
}

/// One grid row: a combo's summary plus its per-fold records.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub combo: ChannelCombo,
    pub summary: CvSummary,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    /// Shared across all combos in the grid; comparisons are paired.
    pub fold_plan_hash: String,
}

/// Run every combo under one shared fold plan and shared seeds, so rows are
/// directly comparable.
pub fn run_grid(
    dataset: &Dataset,
    combos: &[ChannelCombo],
    spec: &NetworkSpec,
    config: &TrainConfig,
    k: usize,
    seeds: RunSeeds,
    normalize_features: bool,
) -> Result<GridOutcome> {
    if combos.is_empty() {
        return Err(Error::config("run_grid: no combos selected"));
    }
    let labels = dataset.labels();
    let plan = stratified_kfold(&labels, k, seeds.split)?;
    let bank = MatrixBank::build(
        spec.input_shape.1,
        dataset.samples[0].image.dim().0,
        dataset.samples[0].image.dim().1,
        BankSeeds::from_master(seeds.matrix),
        &crate::sensing::MatrixKind::ALL,
    )?;
    let mut rows = Vec::with_capacity(combos.len());
    for &combo in combos {
        let raw = extract_features(dataset, combo, &bank)?;
        let outcome =
            cv_over_plan(&raw, &labels, &plan, combo, spec, config, seeds, normalize_features)?;
        rows.push(GridRow {
            combo,
            summary: outcome.summary,
            records: outcome.records,
        });
    }
    Ok(GridOutcome { rows, fold_plan_hash: plan.plan_hash() })
}

fn combo_name(combo: &Option<ChannelCombo>) -> String {
    combo.map(|c| c.to_string()).unwrap_or_else(|| "none".to_string())
}

/// Write records as CSV: header `combo,fold,seed,accuracy,val_loss,epochs_run`,
/// UTF-8, LF endings, 6 decimal places.
pub fn export_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "combo,fold,seed,accuracy,val_loss,epochs_run")?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{:.6},{:.6},{}",
            combo_name(&r.combo),
            r.fold,
            r.seed,
            r.accuracy,
            r.val_loss,
            r.epochs_run
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Parse a CSV produced by [`export_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("combo,fold,seed,accuracy,val_loss,epochs_run") => {}
        other => return Err(Error::Format(format!("unexpected CSV header {other:?}"))),
    }
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!("bad CSV row {line:?}")));
        }
        let combo = if fields[0] == "none" { None } else { Some(fields[0].parse()?) };
        let fold = match fields[1] {
            "holdout" => FoldId::Holdout,
            "mean" => FoldId::Mean,
            n => FoldId::Fold(
                n.parse().map_err(|_| Error::Format(format!("bad fold {n:?}")))?,
            ),
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")))
        };
        records.push(MetricsRecord {
            combo,
            fold,
            seed: fields[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed {:?}", fields[2])))?,
            accuracy: parse_f64(fields[3])?,
            val_loss: parse_f64(fields[4])?,
            epochs_run: fields[5]
                .parse()
                .map_err(|_| Error::Format(format!("bad epochs {:?}", fields[5])))?,
        });
    }
    Ok(records)
}

/// Experiment manifest written beside every CSV; a run is reconstructible
/// from it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Manifest {
    pub command: String,
    pub dataset: DatasetInfo,
    pub seeds: RunSeeds,
    pub combos: Vec<String>,
    pub protocol: Protocol,
    pub network: NetworkInfo,
    pub train: TrainInfo,
    pub normalize: bool,
    pub compression_ratio: f64,
    pub fold_plan_hash: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DatasetInfo {
    pub provenance: Provenance,
    pub total: usize,
    pub class_counts: [usize; 2],
}

impl DatasetInfo {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self {
            provenance: dataset.provenance.clone(),
            total: dataset.len(),
            class_counts: dataset.class_counts,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NetworkInfo {
    pub input_shape: (usize, usize, usize),
    pub conv_channels: Vec<usize>,
    pub fc_hidden: Vec<usize>,
    pub parameters: usize,
    pub digest: String,
}

impl NetworkInfo {
    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self {
            input_shape: spec.input_shape,
            conv_channels: spec.conv_channels.clone(),
            fc_hidden: spec.fc_hidden.clone(),
            parameters: spec.param_count(),
            digest: spec.digest(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainInfo {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
}

impl TrainInfo {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            epochs: config.epochs,
            batch_size: config.batch_size,
            learning_rate: config.learning_rate,
            optimizer: config.optimizer.name().to_string(),
        }
    }
}

/// Pretty-printed JSON with a trailing newline; field order is fixed, so
/// identical runs produce byte-identical manifests.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_dataset;

    fn labels_for(neg: usize, pos: usize) -> Vec<usize> {
        let mut l = vec![0usize; neg];
        l.extend(std::iter::repeat(1).take(pos));
        l
    }

    #[test]
    fn holdout_basic_arithmetic() {
        let labels = labels_for(100, 100);
        let (train, test) = holdout_split(&labels, 0.2, 1).unwrap();
        assert_eq!(test.len(), 40);
        assert_eq!(train.len(), 160);
        let test_pos = test.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(test_pos, 20);
    }

    #[test]
    fn holdout_small_fraction_total() {
        // 349 + 397 samples at 6.5% ≈ 48 test samples.
        let labels = labels_for(397, 349);
        let (_, test) = holdout_split(&labels, 0.065, 3).unwrap();
        assert!((test.len() as i64 - 48).abs() <= 1, "got {}", test.len());
    }

    #[test]
    fn holdout_is_deterministic_and_disjoint() {
        let labels = labels_for(30, 40);
        let a = holdout_split(&labels, 0.25, 9).unwrap();
        let b = holdout_split(&labels, 0.25, 9).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(a.1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..70).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_rejects_tiny_class_and_bad_fraction() {
        assert!(holdout_split(&[0, 1], 0.0, 1).is_err());
        assert!(holdout_split(&[0, 1], 1.0, 1).is_err());
        assert!(holdout_split(&[0, 0, 1], 0.5, 1).is_err());
    }

    #[test]
    fn kfold_balanced_classes() {
        let labels = labels_for(50, 50);
        let plan = stratified_kfold(&labels, 5, 2).unwrap();
        assert!(plan.pool.is_empty());
        for counts in &plan.class_counts {
            assert_eq!(counts, &vec![10, 10]);
        }
    }

    #[test]
    fn kfold_clinical_shape_arithmetic() {
        // 349 positive vs 397 negative, k = 5: floor(349/5) = 69 per class
        // per fold; pool holds 349 - 345 = 4 and 397 - 345 = 52.
        let labels = labels_for(397, 349);
        let plan = stratified_kfold(&labels, 5, 7).unwrap();
        for counts in &plan.class_counts {
            assert_eq!(counts, &vec![69, 69]);
        }
        let pool_pos = plan.pool.iter().filter(|&&i| labels[i] == 1).count();
        let pool_neg = plan.pool.len() - pool_pos;
        assert_eq!(pool_pos, 4);
        assert_eq!(pool_neg, 52);
    }

    #[test]
    fn kfold_partitions_index_set() {
        let labels = labels_for(23, 31);
        let plan = stratified_kfold(&labels, 4, 11).unwrap();
        let mut all: Vec<usize> =
            plan.folds.iter().flatten().chain(plan.pool.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..54).collect::<Vec<_>>());
        // Disjointness across folds and pool.
        for f in 0..plan.k {
            for g in (f + 1)..plan.k {
                assert!(plan.folds[f].iter().all(|i| !plan.folds[g].contains(i)));
            }
            assert!(plan.folds[f].iter().all(|i| !plan.pool.contains(i)));
        }
    }

    #[test]
    fn kfold_no_leakage_into_training() {
        let labels = labels_for(20, 25);
        let plan = stratified_kfold(&labels, 3, 5).unwrap();
        for f in 0..plan.k {
            let train = plan.train_indices(f);
            assert!(plan.folds[f].iter().all(|i| !train.contains(i)));
        }
    }

    #[test]
    fn kfold_rejects_oversized_k() {
        let labels = labels_for(3, 50);
        assert!(stratified_kfold(&labels, 4, 1).is_err());
        assert!(stratified_kfold(&labels, 1, 1).is_err());
    }

    #[test]
    fn kfold_same_seed_same_plan() {
        let labels = labels_for(17, 19);
        let a = stratified_kfold(&labels, 3, 42).unwrap();
        let b = stratified_kfold(&labels, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plan_hash(), b.plan_hash());
        let c = stratified_kfold(&labels, 3, 43).unwrap();
        assert_ne!(a.plan_hash(), c.plan_hash());
    }

    #[test]
    fn summary_is_arithmetic_mean() {
        let records: Vec<MetricsRecord> = [0.5, 0.75, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &a)| MetricsRecord {
                combo: None,
                fold: FoldId::Fold(i),
                accuracy: a,
                val_loss: 1.0 - a,
                seed: 0,
                epochs_run: 1,
            })
            .collect();
        let s = summarize(&records);
        assert!((s.mean_accuracy - 0.75).abs() < 1e-12);
        assert!((s.mean_val_loss - 0.25).abs() < 1e-12);
        assert!((s.std_accuracy - 0.25).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![
            MetricsRecord {
                combo: Some("GCT".parse().unwrap()),
                fold: FoldId::Fold(0),
                accuracy: 0.9375,
                val_loss: 0.221,
                seed: 7,
                epochs_run: 12,
            },
            MetricsRecord {
                combo: None,
                fold: FoldId::Holdout,
                accuracy: 1.0,
                val_loss: 0.0,
                seed: 8,
                epochs_run: 3,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        export_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("combo,fold,seed,accuracy,val_loss,epochs_run\n"));
        assert!(text.contains("GCT,0,7,0.937500,0.221000,12"));
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].combo, records[0].combo);
        assert_eq!(back[0].fold, records[0].fold);
        assert!((back[0].accuracy - records[0].accuracy).abs() < 1e-6);
        assert_eq!(back[1].fold, FoldId::Holdout);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        export_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "combo,fold,seed,accuracy,val_loss,epochs_run\n");
        assert!(read_csv(&path).unwrap().is_empty());
    }

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec { input_shape: (3, 16, 16), conv_channels: vec![4], fc_hidden: vec![8] }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 8, ..Default::default() }
    }

    #[test]
    fn run_cv_record_count_and_summary_math() {
        let dataset = synthesize_dataset(8, 1, 0.0).unwrap();
        let seeds = RunSeeds { matrix: 1, split: 2, init: 3 };
        let out =
            run_cv(&dataset, "GCT".parse().unwrap(), &tiny_spec(), &tiny_config(), 2, seeds, true)
                .unwrap();
        assert_eq!(out.records.len(), 2);
        let mean = (out.records[0].accuracy + out.records[1].accuracy) / 2.0;
        assert!((out.summary.mean_accuracy - mean).abs() < 1e-12);
    }

    #[test]
    fn run_cv_is_deterministic() {
        let dataset = synthesize_dataset(6, 4, 0.2).unwrap();
        let seeds = RunSeeds { matrix: 5, split: 6, init: 7 };
        let combo: ChannelCombo = "GGG".parse().unwrap();
        let a = run_cv(&dataset, combo, &tiny_spec(), &tiny_config(), 2, seeds, true).unwrap();
        let b = run_cv(&dataset, combo, &tiny_spec(), &tiny_config(), 2, seeds, true).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.fold_plan_hash, b.fold_plan_hash);
    }

    #[test]
    fn grid_rows_share_the_fold_plan() {
        let dataset = synthesize_dataset(6, 2, 0.1).unwrap();
        let seeds = RunSeeds { matrix: 1, split: 2, init: 3 };
        let combos: Vec<ChannelCombo> =
            vec!["GGG".parse().unwrap(), "GCT".parse().unwrap()];
        let out = run_grid(&dataset, &combos, &tiny_spec(), &tiny_config(), 2, seeds, true)
            .unwrap();
        assert_eq!(out.rows.len(), 2);
        let plan = stratified_kfold(&dataset.labels(), 2, seeds.split).unwrap();
        assert_eq!(out.fold_plan_hash, plan.plan_hash());
        // Same combo rerun matches exactly.
        let rerun = run_grid(&dataset, &combos[..1], &tiny_spec(), &tiny_config(), 2, seeds, true)
            .unwrap();
        assert_eq!(rerun.rows[0].records, out.rows[0].records);
    }

    #[test]
    fn manifest_serialization_is_stable() {
        let dataset = synthesize_dataset(4, 1, 0.0).unwrap();
        let manifest = Manifest {
            command: "cv".into(),
            dataset: DatasetInfo::from_dataset(&dataset),
            seeds: RunSeeds { matrix: 1, split: 2, init: 3 },
            combos: vec!["GCT".into()],
            protocol: Protocol::KFold { k: 2 },
            network: NetworkInfo::from_spec(&tiny_spec()),
            train: TrainInfo::from_config(&tiny_config()),
            normalize: true,
            compression_ratio: 16.0 * 16.0 / (120.0 * 120.0),
            fold_plan_hash: "abc".into(),
            outputs: vec!["metrics.csv".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        write_manifest(&manifest, &p1).unwrap();
        write_manifest(&manifest, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.contains("\"fold_plan_hash\""));
    }
}
