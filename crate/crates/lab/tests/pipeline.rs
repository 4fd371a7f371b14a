mod common;

use std::fs;

use common::tiny_manifest;
use lookahead_lab::{run_pipeline, ExperimentManifest};

#[test]
fn second_run_is_fully_cached_and_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest("tiny", dir.path(), 0.5);
    let a = run_pipeline(&m, &mut |_| {}).unwrap();
    assert!(a.cached.is_empty());
    let metrics = fs::read(a.metrics_path()).unwrap();
    let b = run_pipeline(&m, &mut |_| {}).unwrap();
    assert_eq!(b.cached, vec!["data", "augment", "train", "eval"]);
    assert_eq!(a.report.csv, b.report.csv);
    assert_eq!(fs::read(b.metrics_path()).unwrap(), metrics);
    let saved = fs::read_to_string(dir.path().join("reports/tiny.manifest")).unwrap();
    assert_eq!(ExperimentManifest::parse(&saved).unwrap(), m);
}

#[test]
fn changing_a_late_setting_reuses_early_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = tiny_manifest("tiny", dir.path(), 0.5);
    run_pipeline(&m, &mut |_| {}).unwrap();
    m.train.lr *= 2.0;
    let b = run_pipeline(&m, &mut |_| {}).unwrap();
    assert_eq!(b.cached, vec!["data", "augment"]);
}

#[test]
fn different_seed_gives_different_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = tiny_manifest("a", dir.path(), 0.5);
    let a = run_pipeline(&m, &mut |_| {}).unwrap();
    m.seed += 1;
    let b = run_pipeline(&m, &mut |_| {}).unwrap();
    assert_ne!(a.data_dir, b.data_dir);
    assert_ne!(fs::read(a.train_path()).unwrap(), fs::read(b.train_path()).unwrap());
    assert_ne!(fs::read(a.test_path()).unwrap(), fs::read(b.test_path()).unwrap());
}

#[test]
fn interrupted_stage_is_redone() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest("tiny", dir.path(), 1.0);
    let a = run_pipeline(&m, &mut |_| {}).unwrap();
    fs::remove_file(a.eval_dir.join("DONE")).unwrap();
    fs::write(a.eval_dir.join("results.csv"), "junk").unwrap();
    let b = run_pipeline(&m, &mut |_| {}).unwrap();
    assert_eq!(b.cached, vec!["data", "augment", "train"]);
    assert_eq!(a.report.csv, b.report.csv);
}

#[test]
fn ntp_runs_only_autoregressive_decoding() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_pipeline(&tiny_manifest("ntp", dir.path(), 1.0), &mut |_| {}).unwrap();
    assert_eq!(a.results.len(), 1);
    assert_eq!(a.results[0].mode, lookahead_lab::InferenceMode::AutoReg);
    let b = run_pipeline(&tiny_manifest("la", dir.path(), 0.5), &mut |_| {}).unwrap();
    assert_eq!(b.results.len(), 3);
}
