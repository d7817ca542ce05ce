mod common;

use std::fs;

use csm::harness::{evaluate, load_dataset, preset, sweep, Checkpoint, RunConfig, SweepParam, Trainer};
use csm::learning::AlgorithmKind;
use csm::CsmError;

fn small(train: usize, val: usize, epochs: usize) -> RunConfig {
    let mut cfg = preset("mnist-desk").unwrap().config;
    cfg.data_dir = Some(common::mnist_dir());
    cfg.subset_train = Some(train);
    cfg.subset_val = Some(val);
    cfg.epochs = epochs;
    cfg
}

#[test]
fn zero_rates_leave_parameters_untouched() {
    let mut cfg = small(100, 50, 2);
    cfg.weight_lr = vec![0.0, 0.0];
    cfg.lateral_lr = vec![0.0];
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    let before = t.params.clone();
    t.run(&ds).unwrap();
    assert_eq!(t.params, before);
    assert_eq!(t.epoch, 2);
}

#[test]
fn training_error_drops_below_baseline() {
    let cfg = small(1000, 200, 2);
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    t.run(&ds).unwrap();
    let base = t.metrics[0].train_err;
    assert!(base > 70.0, "untrained error {base}");
    assert!(t.metrics[2].train_err < base);
    assert!(t.metrics[2].val_err < base);
}

#[test]
fn outputs_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(300, 100, 2);
    cfg.out_dir = Some(dir.path().to_path_buf());
    cfg.trace_samples = 1;
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    t.run(&ds).unwrap();

    for f in ["metrics.csv", "checkpoint.bin", "summary.txt", "config.toml", "dataset.sha256"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.starts_with("epoch,train_err,val_err,free_iters_mean,nonconv,sparsity_l1,sparsity_l2,seconds"));
    assert!(fs::read_dir(dir.path().join("traces")).unwrap().count() >= 1);

    let ck = Checkpoint::load(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(ck.params, t.params);
    assert_eq!(ck.epoch, 2);
    let report = evaluate(
        &ck.params,
        &t.topology,
        &ds,
        &ds.validation,
        &ck.config.eval_phase(),
        ck.config.sparsity_threshold,
    )
    .unwrap();
    assert_eq!(report.error_pct, t.metrics[2].val_err);

    let saved = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(saved.epochs, 2);
    assert_eq!(saved.weight_lr, t.config.weight_lr);
}

#[test]
fn resume_rejects_other_topology_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(100, 50, 1);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg.clone(), &ds).unwrap();
    t.run(&ds).unwrap();
    let ck = Checkpoint::load(&dir.path().join("checkpoint.bin")).unwrap();

    let same = cfg.topology(784).unwrap();
    assert!(ck.check_topology(&same).is_ok());
    let mut other = cfg.clone();
    other.hidden = vec![32];
    let err = ck.check_topology(&other.topology(784).unwrap()).unwrap_err();
    assert!(matches!(err, CsmError::Checkpoint(_)), "{err}");

    let mut moved = cfg;
    moved.subset_seed = 9;
    let ds2 = load_dataset(&moved).unwrap();
    assert!(Trainer::resume(ck, &ds2).is_err());
}

#[test]
fn ep_variants_without_laterals_keep_them_zero() {
    let cfg = RunConfig {
        algorithm: AlgorithmKind::EpBetaPositive,
        ..small(100, 50, 1)
    };
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    t.run(&ds).unwrap();
    assert!(t.params.laterals.iter().all(|l| l.iter().all(|&v| v == 0.0)));
}

#[test]
fn beta_sweep_reports_every_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(100, 50, 1);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let ds = load_dataset(&cfg).unwrap();
    let rows = sweep(&cfg, &ds, SweepParam::Beta, &[0.5, 1.0], 2).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.errors.len(), 2);
        assert!(r.min() <= r.mean() && r.mean() <= r.max());
    }
    assert!(dir.path().join("beta-0.5-trial1").join("metrics.csv").is_file());
}
