#![allow(dead_code)]

use std::path::Path;

use tabtext::evalkit::MetricKind;
use tabtext_bench::config::DatasetConfig;
use tabtext_bench::synth::write_synthetic;
use tabtext_bench::SyntheticSpec;

/// Writes `spec` under `dir/<name>` and returns a config pointing at it.
pub fn synth_dataset(dir: &Path, spec: &SyntheticSpec, metric: Option<MetricKind>) -> DatasetConfig {
    let sub = dir.join(&spec.name);
    write_synthetic(spec, &sub).unwrap();
    DatasetConfig {
        name: spec.name.clone(),
        path: sub.join("train.csv"),
        test_path: Some(sub.join("test.csv")),
        target: spec.target_name().into(),
        task: spec.task,
        metric,
        type_overrides: spec.hints(),
        test_fraction: None,
    }
}
