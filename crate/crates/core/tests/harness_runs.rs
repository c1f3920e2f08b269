use std::path::Path;

use tcprune::gcn::{gcn_consistency, GcnMask, SynthParams};
use tcprune::gcn::train::{evaluate, TrainConfig};
use tcprune::harness::{
    aggregate, load_data, report, rows_from_csv, rows_to_string, run_ablation, run_alpha_sweep, train_baseline,
    DatasetSource, ExperimentConfig, Format, ModelConfig, RunLog, Variant, ABLATION_LOG, ALPHA_LOG,
};
use tcprune::pruner::Scoring;

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            params: SynthParams {
                num_classes: 3,
                per_class: 8,
                joints: 6,
                frames: 12,
                noise: 0.2,
                seed: 4,
            },
            test_per_class: 4,
        },
        model: ModelConfig {
            heads: 2,
            filters: 4,
            chunks: 3,
        },
        train: TrainConfig {
            epochs: 8,
            batch_size: 6,
            ..TrainConfig::default()
        },
        finetune_epochs: Some(3),
        rates: vec![0.5, 0.98],
        variants: vec![
            Variant { tc: false, stochastic: false, scoring: Scoring::Local },
            Variant { tc: false, stochastic: true, scoring: Scoring::Local },
            Variant { tc: true, stochastic: false, scoring: Scoring::Local },
            Variant { tc: true, stochastic: true, scoring: Scoring::Global { alpha: 0.5 } },
        ],
        alphas: vec![1.0, 0.5, 0.1],
        alpha_rate: 0.9,
        seeds: vec![0, 1, 2],
        output: out.to_path_buf(),
    }
}

fn read_log(dir: &Path, name: &str) -> RunLog {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn grid_shape_and_consistency_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let rows = run_ablation(&cfg).unwrap();
    let log = read_log(dir.path(), ABLATION_LOG);
    assert_eq!(log.runs.len(), 24);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row.seed_count, 3);
        if row.tc {
            assert_eq!(row.ac_percentage, Some(100.0));
        }
    }
    // at 0.98 only 4 of 216 parameters survive; magnitude pruning scatters them
    let hyper = log.hyper;
    assert_eq!(hyper.param_count(), 216);
    assert!(rows.iter().any(|r| !r.tc && r.rate == 0.98 && r.ac_percentage.is_none_or(|a| a < 100.0)));
    assert!(log.runs.iter().all(|r| r.status == "ok" || r.status == "disconnected"));
    let sorted: Vec<_> = rows.iter().map(|r| (r.rate.to_bits(), r.tc, r.stochastic)).collect();
    let mut again = sorted.clone();
    again.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(sorted, again);
}

#[test]
fn budget_below_depth_is_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.rates = vec![0.999];
    cfg.seeds = vec![0];
    cfg.variants.retain(|v| v.tc);
    let rows = run_ablation(&cfg).unwrap();
    let log = read_log(dir.path(), ABLATION_LOG);
    for run in &log.runs {
        assert!(run.status.contains("budget"), "{}", run.status);
        assert!(run.mask_file.is_none() && run.accuracy.is_none());
    }
    assert!(rows.iter().all(|r| r.accuracy_mean.is_none() && r.kept_params == 0.0));
}

#[test]
fn zero_rate_reproduces_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.rates = vec![0.0];
    cfg.seeds = vec![5];
    let rows = run_ablation(&cfg).unwrap();
    let data = load_data(&cfg).unwrap();
    let baseline = train_baseline(&cfg, &data, 5).unwrap();
    let acc = evaluate(&baseline, &data.test, None).unwrap();
    for row in rows {
        assert_eq!(row.accuracy_mean, Some(acc));
        assert_eq!(row.kept_params, data.hyper.param_count() as f64);
    }
}

#[test]
fn persisted_masks_reproduce_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let rows = run_ablation(&cfg).unwrap();
    assert_eq!(report(dir.path(), ABLATION_LOG).unwrap(), rows);
    let log = read_log(dir.path(), ABLATION_LOG);
    for run in &log.runs {
        let file = run.mask_file.as_ref().expect("every pruned run persists its mask");
        let mask = GcnMask::from_text(log.hyper, &std::fs::read_to_string(dir.path().join(file)).unwrap()).unwrap();
        assert_eq!(mask.kept_count(), run.kept);
        assert_eq!(gcn_consistency(&mask).ac_percent, run.ac_percent);
    }
    // tampering with a mask is detected
    let victim = log.runs[0].mask_file.as_ref().unwrap();
    let ones = GcnMask::ones(log.hyper).to_text();
    std::fs::write(dir.path().join(victim), ones).unwrap();
    assert!(report(dir.path(), ABLATION_LOG).is_err());
}

#[test]
fn disconnected_rows_have_no_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.rates = vec![0.999];
    cfg.variants.truncate(1);
    let rows = run_ablation(&cfg).unwrap();
    let log = read_log(dir.path(), ABLATION_LOG);
    for run in &log.runs {
        if run.status == "disconnected" {
            assert!(run.accuracy.is_none());
        }
    }
    let text = rows_to_string(&rows, Format::Csv).unwrap();
    assert_eq!(rows_from_csv(&text).unwrap(), rows);
}

#[test]
fn alpha_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.seeds = vec![3, 3];
    let rows = run_alpha_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(row.tc && row.stochastic);
        assert_eq!(row.scoring, "global");
        assert_eq!(row.rate, 0.9);
        assert_eq!(row.accuracy_std, Some(0.0));
        assert_eq!(row.ac_percentage, Some(100.0));
    }
    let alphas: Vec<f64> = rows.iter().map(|r| r.alpha.unwrap()).collect();
    assert_eq!(alphas, vec![0.1, 0.5, 1.0]);
    assert_eq!(report(dir.path(), ALPHA_LOG).unwrap(), rows);

    cfg.alphas = vec![1.0];
    let single = run_alpha_sweep(&cfg).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].alpha, Some(1.0));
}

#[test]
fn baseline_is_not_mutated_by_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = load_data(&cfg).unwrap();
    let baseline = train_baseline(&cfg, &data, 0).unwrap();
    let before = serde_json::to_string(&baseline).unwrap();
    for v in &cfg.variants {
        for &rate in &cfg.rates {
            tcprune::harness::run_one(&cfg, &data, &baseline, 0.0, rate, v, 0, None).unwrap();
        }
    }
    assert_eq!(serde_json::to_string(&baseline).unwrap(), before);
}

#[test]
fn aggregation_ignores_run_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run_ablation(&cfg).unwrap();
    let mut log = read_log(dir.path(), ABLATION_LOG);
    let forward = aggregate(&log.runs);
    log.runs.reverse();
    let mut backward = aggregate(&log.runs);
    // seed order inside a group changes float summation order only in wall time
    for (a, b) in forward.iter().zip(backward.iter_mut()) {
        b.wall_time_seconds = a.wall_time_seconds;
        assert_eq!(a.kept_params, b.kept_params);
        assert_eq!(a.seed_count, b.seed_count);
        assert_eq!((a.rate, a.tc, a.stochastic), (b.rate, b.tc, b.stochastic));
    }
}
