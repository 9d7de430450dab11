//! JSON run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tabtext::ensemble::{DEFAULT_FOLDS, DEFAULT_ROUNDS};
use tabtext::evalkit::MetricKind;
use tabtext::neuralnet::{EncoderDims, NetSpec, Variant};
use tabtext::{Modality, Task};

use crate::strategy::Strategy;

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    /// Training CSV, or the whole dataset when `test_path` is absent.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    pub target: String,
    pub task: Task,
    /// Defaults to the task's metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    #[serde(default)]
    pub type_overrides: BTreeMap<String, Modality>,
    /// Share held out as test rows when there is no separate test file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
}

impl DatasetConfig {
    pub fn metric(&self) -> MetricKind {
        self.metric.unwrap_or_else(|| MetricKind::for_task(self.task))
    }

    fn resolve(&mut self, base: &Path) {
        if self.path.is_relative() {
            self.path = base.join(&self.path);
        }
        if let Some(t) = &self.test_path {
            if t.is_relative() {
                self.test_path = Some(base.join(t));
            }
        }
    }
}

/// Knobs shared by every strategy of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOptions {
    pub net: NetSpec,
    pub folds: usize,
    pub rounds: usize,
    /// Epoch budget of each network fold fit inside `stack_ensemble`;
    /// `None` keeps the network's own budget.
    pub stack_net_epochs: Option<usize>,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions {
            net: desk_net(),
            folds: DEFAULT_FOLDS,
            rounds: DEFAULT_ROUNDS,
            stack_net_epochs: None,
        }
    }
}

/// Network settings sized for CPU runs on a few thousand rows. The
/// tabular branches keep their default sizes; encoder width, depth, peak
/// learning rate and epochs are scaled for an encoder trained from scratch.
pub fn desk_net() -> NetSpec {
    let mut s = NetSpec::new(Variant::FuseLate);
    s.hidden_size = 32;
    s.n_layers = 1;
    s.n_heads = 8;
    s.ffn_size = 64;
    s.fuse_early_encoder = EncoderDims {
        layers: 2,
        units: 32,
        heads: 4,
        ffn: 64,
    };
    s.vocab_size = 2000;
    s.max_length = 128;
    s.train.peak_lr = 4e-3;
    s.train.batch_size = 32;
    s.train.epochs = 20;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    datasets: Vec<DatasetConfig>,
    strategies: Vec<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    validation_fraction: Option<f64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    workers: Option<usize>,
    /// Partial overrides merged onto [`desk_net`].
    #[serde(default)]
    net: Option<Value>,
    #[serde(default)]
    folds: Option<usize>,
    #[serde(default)]
    rounds: Option<usize>,
    #[serde(default)]
    stack_net_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub datasets: Vec<DatasetConfig>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub validation_fraction: f64,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub options: StrategyOptions,
}

impl RunConfig {
    pub fn new(datasets: Vec<DatasetConfig>, strategies: Vec<Strategy>, seeds: Vec<u64>) -> Self {
        RunConfig {
            datasets,
            strategies,
            seeds,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            output_dir: None,
            workers: None,
            options: StrategyOptions::default(),
        }
    }

    /// Parses a config file; relative dataset paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    pub fn parse(json: &str, base: &Path) -> Result<RunConfig> {
        let raw: RawRunConfig = serde_json::from_str(json).context("parsing run config")?;
        let strategies = raw
            .strategies
            .iter()
            .map(|s| s.parse::<Strategy>())
            .collect::<Result<Vec<_>>>()?;
        let seeds = match (raw.seed, raw.seeds) {
            (Some(_), Some(_)) => bail!("give either `seed` or `seeds`, not both"),
            (Some(s), None) => vec![s],
            (None, Some(list)) => list,
            (None, None) => vec![0],
        };
        let mut net = serde_json::to_value(desk_net())?;
        if let Some(over) = raw.net {
            merge(&mut net, over);
        }
        let defaults = StrategyOptions::default();
        let options = StrategyOptions {
            net: serde_json::from_value(net).context("parsing `net` overrides")?,
            folds: raw.folds.unwrap_or(defaults.folds),
            rounds: raw.rounds.unwrap_or(defaults.rounds),
            stack_net_epochs: raw.stack_net_epochs.or(defaults.stack_net_epochs),
        };
        let mut datasets = raw.datasets;
        for d in &mut datasets {
            d.resolve(base);
        }
        let config = RunConfig {
            datasets,
            strategies,
            seeds,
            validation_fraction: raw.validation_fraction.unwrap_or(DEFAULT_VALIDATION_FRACTION),
            output_dir: raw.output_dir.map(|p| if p.is_relative() { base.join(p) } else { p }),
            workers: raw.workers,
            options,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("config lists no datasets");
        }
        if self.strategies.is_empty() {
            bail!("config lists no strategies");
        }
        if self.seeds.is_empty() {
            bail!("config lists no seeds");
        }
        let f = self.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("validation_fraction {f} outside (0, 1)");
        }
        if self.options.folds < 2 {
            bail!("folds must be at least 2");
        }
        if self.options.rounds == 0 || self.options.stack_net_epochs == Some(0) {
            bail!("rounds and stack_net_epochs must be positive");
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                bail!("duplicate dataset name {:?}", d.name);
            }
            if !d.metric().supports(d.task) {
                bail!("dataset {:?}: metric {} does not fit task {:?}", d.name, d.metric().name(), d.task);
            }
            if let Some(t) = d.test_fraction {
                if !(t > 0.0 && t < 1.0) {
                    bail!("dataset {:?}: test_fraction {t} outside (0, 1)", d.name);
                }
            }
        }
        self.options.net.train.validate()?;
        Ok(())
    }
}

/// Recursively overlays `over` onto `base` (objects merge key by key).
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
