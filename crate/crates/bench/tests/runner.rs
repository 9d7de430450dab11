mod common;

use std::collections::BTreeSet;

use tabtext::evalkit::MetricKind;
use tabtext_bench::runner::{execute, run, Outcome, RESULTS_CSV};
use tabtext_bench::{Allocation, Method, RunConfig, Strategy, SyntheticSpec};

use common::synth_dataset;

fn quick(mut config: RunConfig) -> RunConfig {
    config.options.net.train.epochs = 3;
    config
}

#[test]
fn one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        name: "small".into(),
        n_rows: 300,
        ..SyntheticSpec::default()
    };
    let ds = synth_dataset(dir.path(), &spec, None);
    let config = quick(RunConfig::new(vec![ds], vec![Strategy::TabStack, Strategy::StackEnsemble], vec![0]));
    let report = run(&config, &dir.path().join("out"), 1).unwrap();
    assert_eq!(report.cells.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("out").join(RESULTS_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "method,dataset,seed,score,status,reason");
    assert!(lines[1].starts_with("tab_stack,small,0,"));
    assert!(lines[2].starts_with("stack_ensemble,small,0,"));
}

#[test]
fn fusion_is_skipped_without_text() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        name: "notext".into(),
        n_rows: 300,
        n_text_fields: 0,
        signal_allocation: Allocation::new(0.0, 1.0, 0.0),
        ..SyntheticSpec::default()
    };
    let ds = synth_dataset(dir.path(), &spec, None);
    let config = quick(RunConfig::new(vec![ds], vec![Strategy::FuseLate, Strategy::TabWeighted], vec![0]));
    let methods: Vec<Method> = config.strategies.iter().map(|&s| s.into()).collect();
    let report = execute(&config, &methods, 1).unwrap();
    assert!(matches!(report.cells[0].outcome, Outcome::Skipped(_)), "{:?}", report.cells[0]);
    assert!(report.cells[1].score().unwrap() > 0.7);
}

#[test]
fn methods_share_one_split_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        name: "shared".into(),
        n_rows: 300,
        ..SyntheticSpec::default()
    };
    let mut ds = synth_dataset(dir.path(), &spec, None);
    // no test file: the test split is carved from the pool too
    ds.test_path = None;
    let config = quick(RunConfig::new(vec![ds], vec![Strategy::TabWeighted, Strategy::TextNet], vec![0, 1]));
    let a = execute(&config, &[Strategy::TabWeighted.into()], 1).unwrap();
    let b = execute(&config, &[Strategy::TextNet.into()], 1).unwrap();
    assert_eq!(a.splits, b.splits);
    let hashes: BTreeSet<&str> = a.splits.iter().map(|s| s.train_rows_hash.as_str()).collect();
    assert_eq!(hashes.len(), 2, "each seed draws its own split");
    let pool = std::fs::read_to_string(&config.datasets[0].path).unwrap().lines().count() - 1;
    assert_eq!(a.splits[0].n_train + a.splits[0].n_valid + a.splits[0].n_test, pool);
}

#[test]
fn missing_file_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        name: "gone".into(),
        n_rows: 100,
        ..SyntheticSpec::default()
    };
    let mut ds = synth_dataset(dir.path(), &spec, None);
    ds.path = dir.path().join("missing.csv");
    let config = RunConfig::new(vec![ds], vec![Strategy::TabWeighted], vec![0]);
    let report = execute(&config, &[Strategy::TabWeighted.into()], 1).unwrap();
    assert!(report.cells.is_empty());
    assert_eq!(report.dataset_errors.len(), 1);
}

#[test]
fn stack_ensemble_beats_tab_stack_on_interaction() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        name: "xor".into(),
        n_rows: 2000,
        signal_allocation: Allocation::new(0.0, 0.0, 1.0),
        seed: 3,
        ..SyntheticSpec::default()
    };
    let ds = synth_dataset(dir.path(), &spec, Some(MetricKind::Accuracy));
    let config = RunConfig::new(vec![ds], vec![Strategy::StackEnsemble, Strategy::TabStack], vec![0]);
    let methods: Vec<Method> = config.strategies.iter().map(|&s| s.into()).collect();
    let report = execute(&config, &methods, 1).unwrap();
    let stack = report.score("stack_ensemble", "xor", 0).unwrap();
    let tab = report.score("tab_stack", "xor", 0).unwrap();
    assert!(stack > tab + 0.1, "stack_ensemble {stack} vs tab_stack {tab}");
}
