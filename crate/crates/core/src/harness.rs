//! Experiment driver: train one baseline per seed, prune it under every
//! configured variant, fine-tune the survivors and aggregate over seeds.
//!
//! An output directory receives the result table, a per-run log and one mask
//! file per run, so every table cell can be recomputed with [`report`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::model::{GcnHyper, GcnMask, GcnModel};
use crate::gcn::prune::{gcn_consistency, prune_gcn, trim_gcn};
use crate::gcn::skeleton::{read_dataset_dir, synth_dataset, SkeletonDataset, SynthParams};
use crate::gcn::train::{evaluate, featurize, train, LabeledSignal, TrainConfig};
use crate::linalg::BoolMatrix;
use crate::pruner::{PruneSpec, Scoring};
use crate::surrogate::validate_alpha;

pub const CSV_HEADER: &str = "rate,tc,stochastic,scoring,alpha,kept_params,ac_percent,acc_mean,acc_std,seeds,wall_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    /// Directory holding `train/` and `test/` sequence directories.
    Path(PathBuf),
    /// Generated data; the first `params.per_class` sequences of each class
    /// train, the next `test_per_class` test.
    Synthetic { params: SynthParams, test_per_class: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub heads: usize,
    pub filters: usize,
    /// Temporal chunks M; the signal dimension is `3 * M`.
    pub chunks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            filters: 16,
            chunks: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub tc: bool,
    pub stochastic: bool,
    pub scoring: Scoring,
}

impl Variant {
    pub fn spec(&self, rate: f64, seed: u64) -> PruneSpec {
        PruneSpec {
            rate,
            tc: self.tc,
            stochastic: self.stochastic,
            scoring: self.scoring,
            seed,
        }
    }
}

fn default_alpha_rate() -> f64 {
    0.999
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelConfig,
    /// Baseline training; its seed is replaced by each experiment seed.
    #[serde(default)]
    pub train: TrainConfig,
    /// Defaults to a quarter of the baseline epochs.
    #[serde(default)]
    pub finetune_epochs: Option<usize>,
    pub rates: Vec<f64>,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Pruning rate of the alpha sweep.
    #[serde(default = "default_alpha_rate")]
    pub alpha_rate: f64,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.variants.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("need at least one rate, one variant and one seed".into()));
        }
        for &rate in self.rates.iter().chain(std::iter::once(&self.alpha_rate)) {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("pruning rate {rate} outside [0, 1)")));
            }
        }
        for v in &self.variants {
            if let Some(alpha) = v.scoring.alpha() {
                validate_alpha(alpha).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        for &alpha in &self.alphas {
            validate_alpha(alpha).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.model.heads == 0 || self.model.filters == 0 || self.model.chunks == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if self.finetune_epochs == Some(0) {
            return Err(Error::Config("finetune_epochs must be positive".into()));
        }
        self.train.validate()
    }

    pub fn finetune_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.finetune_epochs.unwrap_or((self.train.epochs / 4).max(1)),
            seed,
            ..self.train
        }
    }
}

/// One aggregated table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rate: f64,
    pub tc: bool,
    pub stochastic: bool,
    pub scoring: String,
    pub alpha: Option<f64>,
    pub kept_params: f64,
    #[serde(rename = "ac_percent")]
    pub ac_percentage: Option<f64>,
    #[serde(rename = "acc_mean")]
    pub accuracy_mean: Option<f64>,
    #[serde(rename = "acc_std")]
    pub accuracy_std: Option<f64>,
    #[serde(rename = "seeds")]
    pub seed_count: usize,
    #[serde(rename = "wall_s")]
    pub wall_time_seconds: f64,
}

/// One (rate, variant, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rate: f64,
    pub variant: Variant,
    pub seed: u64,
    pub kept: usize,
    pub consistent: usize,
    pub ac_percent: Option<f64>,
    pub accuracy: Option<f64>,
    /// `ok`, `disconnected`, or the error that stopped the run.
    pub status: String,
    /// Relative to the output directory.
    pub mask_file: Option<String>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub hyper: GcnHyper,
    pub baseline_accuracy: BTreeMap<u64, f64>,
    pub runs: Vec<RunRecord>,
}

pub struct ExperimentData {
    pub train: Vec<LabeledSignal>,
    pub test: Vec<LabeledSignal>,
    pub adjacency: BoolMatrix,
    pub hyper: GcnHyper,
}

/// Splits generated data per class into train and test sets.
pub fn split_synthetic(params: &SynthParams, test_per_class: usize) -> Result<(SkeletonDataset, SkeletonDataset)> {
    let all = synth_dataset(&SynthParams {
        per_class: params.per_class + test_per_class,
        ..*params
    })?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in all.sequences.chunks(params.per_class + test_per_class) {
        train.extend_from_slice(&class[..params.per_class]);
        test.extend_from_slice(&class[params.per_class..]);
    }
    let wrap = |sequences| SkeletonDataset {
        adjacency: all.adjacency.clone(),
        sequences,
    };
    Ok((wrap(train), wrap(test)))
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let (train_set, test_set, classes) = match &cfg.dataset {
        DatasetSource::Synthetic { params, test_per_class } => {
            if *test_per_class == 0 {
                return Err(Error::Config("test_per_class must be positive".into()));
            }
            let (a, b) = split_synthetic(params, *test_per_class)?;
            (a, b, params.num_classes)
        }
        DatasetSource::Path(dir) => {
            let a = read_dataset_dir(&dir.join("train"))?;
            let b = read_dataset_dir(&dir.join("test"))?;
            if a.adjacency != b.adjacency {
                return Err(Error::Domain("train and test adjacency differ".into()));
            }
            let classes = a.sequences.iter().chain(&b.sequences).map(|s| s.label + 1).max().unwrap_or(0);
            (a, b, classes)
        }
    };
    if train_set.sequences.is_empty() || test_set.sequences.is_empty() {
        return Err(Error::Domain("train and test sets must be nonempty".into()));
    }
    let hyper = GcnHyper {
        heads: cfg.model.heads,
        filters: cfg.model.filters,
        nodes: train_set.adjacency.rows(),
        signal: 3 * cfg.model.chunks,
        classes,
    };
    Ok(ExperimentData {
        train: featurize(&train_set, cfg.model.chunks)?,
        test: featurize(&test_set, cfg.model.chunks)?,
        adjacency: train_set.adjacency,
        hyper,
    })
}

pub fn train_baseline(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<GcnModel> {
    let model = GcnModel::init(data.hyper, Some(&data.adjacency), seed)?;
    let tc = TrainConfig { seed, ..cfg.train };
    Ok(train(&model, &data.train, &tc, None)?.model)
}

fn fmt_float(v: f64) -> String {
    format!("{v}")
}

fn mask_name(rate: f64, variant: &Variant, seed: u64) -> String {
    let alpha = variant.scoring.alpha().map(|a| format!("-a{}", fmt_float(a))).unwrap_or_default();
    format!(
        "r{}_tc{}_st{}_{}{alpha}_s{seed}.mask",
        fmt_float(rate),
        u8::from(variant.tc),
        u8::from(variant.stochastic),
        variant.scoring.name()
    )
}

#[allow(clippy::too_many_arguments)]
/// Prunes the baseline, fine-tunes the survivors and evaluates on the test set.
/// Pruning errors end the run with the error recorded as its status.
pub fn run_one(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    baseline: &GcnModel,
    baseline_accuracy: f64,
    rate: f64,
    variant: &Variant,
    seed: u64,
    mask_dir: Option<&Path>,
) -> Result<RunRecord> {
    let start = Instant::now();
    let spec = variant.spec(rate, seed);
    let mut record = RunRecord {
        rate,
        variant: *variant,
        seed,
        kept: 0,
        consistent: 0,
        ac_percent: None,
        accuracy: None,
        status: "ok".into(),
        mask_file: None,
        wall_s: 0.0,
    };
    let mask = match prune_gcn(baseline, &spec) {
        Ok(mask) => mask,
        Err(Error::Divergence { epoch }) => return Err(Error::Divergence { epoch }),
        Err(e) => {
            record.status = e.to_string();
            record.wall_s = start.elapsed().as_secs_f64();
            return Ok(record);
        }
    };
    let summary = gcn_consistency(&mask);
    record.kept = summary.kept;
    record.consistent = summary.consistent;
    record.ac_percent = summary.ac_percent;
    if let Some(dir) = mask_dir {
        let name = mask_name(rate, variant, seed);
        std::fs::write(dir.join(&name), mask.to_text())?;
        record.mask_file = Some(format!("masks/{name}"));
    }
    if mask.kept_count() == mask.hyper().param_count() {
        record.accuracy = Some(baseline_accuracy);
    } else if trim_gcn(&mask).kept_count() == 0 {
        record.status = "disconnected".into();
    } else {
        let tuned = train(baseline, &data.train, &cfg.finetune_config(seed), Some(&mask))?;
        record.accuracy = Some(evaluate(&tuned.model, &data.test, Some(&mask))?);
    }
    record.wall_s = start.elapsed().as_secs_f64();
    Ok(record)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates runs over seeds; rows are sorted by `(rate, tc, stochastic)`,
/// then scoring and alpha.
pub fn aggregate(runs: &[RunRecord]) -> Vec<ResultRow> {
    let mut groups: Vec<(Variant, f64, Vec<&RunRecord>)> = Vec::new();
    for run in runs {
        match groups.iter_mut().find(|(v, r, _)| *v == run.variant && *r == run.rate) {
            Some(g) => g.2.push(run),
            None => groups.push((run.variant, run.rate, vec![run])),
        }
    }
    let mut rows: Vec<ResultRow> = groups
        .into_iter()
        .map(|(variant, rate, members)| {
            let kept: Vec<f64> = members.iter().map(|r| r.kept as f64).collect();
            let ac: Vec<f64> = members.iter().filter_map(|r| r.ac_percent).collect();
            let acc: Vec<f64> = members.iter().filter_map(|r| r.accuracy).collect();
            let (acc_mean, acc_std) = if acc.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&acc);
                (Some(m), Some(s))
            };
            ResultRow {
                rate,
                tc: variant.tc,
                stochastic: variant.stochastic,
                scoring: variant.scoring.name().to_owned(),
                alpha: variant.scoring.alpha(),
                kept_params: mean_std(&kept).0,
                ac_percentage: (!ac.is_empty()).then(|| mean_std(&ac).0),
                accuracy_mean: acc_mean,
                accuracy_std: acc_std,
                seed_count: members.len(),
                wall_time_seconds: members.iter().map(|r| r.wall_s).sum(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.rate
            .total_cmp(&b.rate)
            .then(a.tc.cmp(&b.tc))
            .then(a.stochastic.cmp(&b.stochastic))
            .then(a.scoring.cmp(&b.scoring))
            .then(a.alpha.unwrap_or(0.0).total_cmp(&b.alpha.unwrap_or(0.0)))
    });
    rows
}

fn run_grid(cfg: &ExperimentConfig, grid: &[(f64, Variant)], log_name: &str) -> Result<(Vec<ResultRow>, RunLog)> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let mask_dir = cfg.output.join("masks");
    std::fs::create_dir_all(&mask_dir)?;
    let mut runs = Vec::new();
    let mut baseline_accuracy = BTreeMap::new();
    for &seed in &cfg.seeds {
        let baseline = train_baseline(cfg, &data, seed)?;
        let acc = evaluate(&baseline, &data.test, None)?;
        baseline_accuracy.insert(seed, acc);
        for (rate, variant) in grid {
            runs.push(run_one(cfg, &data, &baseline, acc, *rate, variant, seed, Some(&mask_dir))?);
        }
    }
    let log = RunLog {
        hyper: data.hyper,
        baseline_accuracy,
        runs,
    };
    std::fs::write(cfg.output.join(log_name), serde_json::to_string_pretty(&log)?)?;
    Ok((aggregate(&log.runs), log))
}

/// Every rate crossed with every variant.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let grid: Vec<(f64, Variant)> = cfg
        .rates
        .iter()
        .flat_map(|&r| cfg.variants.iter().map(move |v| (r, *v)))
        .collect();
    Ok(run_grid(cfg, &grid, ABLATION_LOG)?.0)
}

/// Stochastic TC pruning with global scoring at `alpha_rate`, one row per alpha.
pub fn run_alpha_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.alphas.is_empty() {
        return Err(Error::Config("alpha sweep needs at least one alpha".into()));
    }
    let grid: Vec<(f64, Variant)> = cfg
        .alphas
        .iter()
        .map(|&alpha| {
            (
                cfg.alpha_rate,
                Variant {
                    tc: true,
                    stochastic: true,
                    scoring: Scoring::Global { alpha },
                },
            )
        })
        .collect();
    Ok(run_grid(cfg, &grid, ALPHA_LOG)?.0)
}

pub const ABLATION_LOG: &str = "ablation_runs.json";
pub const ALPHA_LOG: &str = "alpha_sweep_runs.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn rows_to_string(rows: &[ResultRow], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if rows.is_empty() {
                w.write_record(CSV_HEADER.split(','))?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

pub fn emit(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Domain("no rows to emit".into()));
    }
    std::fs::write(path, rows_to_string(rows, format)?)?;
    Ok(())
}

/// Reloads a run log, recomputes kept counts and A-C percentages from the
/// persisted masks, and aggregates the rows again.
pub fn report(dir: &Path, log_name: &str) -> Result<Vec<ResultRow>> {
    let log: RunLog = serde_json::from_str(&std::fs::read_to_string(dir.join(log_name))?)?;
    for run in &log.runs {
        if let Some(file) = &run.mask_file {
            let mask = GcnMask::from_text(log.hyper, &std::fs::read_to_string(dir.join(file))?)?;
            let s = gcn_consistency(&mask);
            if s.kept != run.kept || s.consistent != run.consistent || s.ac_percent != run.ac_percent {
                return Err(Error::Domain(format!("mask {file} disagrees with the run log")));
            }
        }
    }
    Ok(aggregate(&log.runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rate: f64, tc: bool, seed: u64, kept: usize, acc: Option<f64>) -> RunRecord {
        RunRecord {
            rate,
            variant: Variant {
                tc,
                stochastic: false,
                scoring: Scoring::Local,
            },
            seed,
            kept,
            consistent: kept,
            ac_percent: (kept > 0).then_some(100.0),
            accuracy: acc,
            status: "ok".into(),
            mask_file: None,
            wall_s: 0.5,
        }
    }

    #[test]
    fn aggregate_groups_and_sorts() {
        let runs = vec![
            record(0.9, true, 0, 10, Some(0.5)),
            record(0.5, false, 0, 20, Some(0.8)),
            record(0.9, true, 1, 12, Some(0.7)),
            record(0.5, false, 1, 20, None),
        ];
        let rows = aggregate(&runs);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].rate, rows[0].tc), (0.5, false));
        assert_eq!(rows[0].accuracy_mean, Some(0.8));
        assert_eq!(rows[0].accuracy_std, Some(0.0));
        assert_eq!(rows[1].kept_params, 11.0);
        assert!((rows[1].accuracy_mean.unwrap() - 0.6).abs() < 1e-15);
        assert!((rows[1].accuracy_std.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(rows[1].seed_count, 2);
        assert_eq!(rows[1].wall_time_seconds, 1.0);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let mut rows = aggregate(&[record(0.99, true, 0, 34, Some(0.75))]);
        rows.push(ResultRow {
            alpha: Some(0.4),
            scoring: "global".into(),
            ac_percentage: None,
            accuracy_mean: None,
            accuracy_std: None,
            kept_params: 0.0,
            ..rows[0].clone()
        });
        let text = rows_to_string(&rows, Format::Csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().nth(2).unwrap(), "0.99,true,false,global,0.4,0.0,,,,1,0.5");
        assert_eq!(rows_from_csv(&text).unwrap(), rows);
    }

    #[test]
    fn json_uses_table_field_names() {
        let rows = aggregate(&[record(0.5, false, 0, 0, None)]);
        let value: serde_json::Value = serde_json::from_str(&rows_to_string(&rows, Format::Json).unwrap()).unwrap();
        let obj = value[0].as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        let mut want: Vec<&str> = CSV_HEADER.split(',').collect();
        keys.sort_unstable();
        want.sort_unstable();
        assert_eq!(keys, want);
        assert!(obj["ac_percent"].is_null());
        assert!(obj["acc_mean"].is_null());
    }

    #[test]
    fn config_validation() {
        let text = r#"{
            "dataset": {"synthetic": {"params": {"num_classes": 2, "per_class": 3, "joints": 4, "frames": 6, "noise": 0.1, "seed": 0}, "test_per_class": 2}},
            "rates": [0.5],
            "variants": [{"tc": true, "stochastic": false, "scoring": {"kind": "local"}}],
            "seeds": [0],
            "output": "out"
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.finetune_config(3).epochs, 25);
        let mut bad = cfg.clone();
        bad.seeds.clear();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.rates = vec![1.0];
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.alphas = vec![0.0];
        assert!(bad.validate().is_err());
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_split_sizes() {
        let params = SynthParams {
            num_classes: 3,
            per_class: 4,
            joints: 5,
            frames: 6,
            noise: 0.1,
            seed: 1,
        };
        let (train, test) = split_synthetic(&params, 2).unwrap();
        assert_eq!(train.sequences.len(), 12);
        assert_eq!(test.sequences.len(), 6);
        assert_eq!(test.sequences.iter().filter(|s| s.label == 2).count(), 2);
    }
}
