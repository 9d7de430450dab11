//! Table-level wrapper: schema, vocabulary and target scaling around a
//! network, exposed as a [`Learner`].

use serde::{Deserialize, Serialize};

use super::net::{build_net, NetBatch, TrainedNet};
use super::train::{train, NetData};
use super::{EncoderDims, NetConfig, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::evalkit::MetricKind;
use crate::frame::{
    infer_schema, split_indices, DataTable, FeatureSchema, Modality, SplitSpec, Task, DEFAULT_CATEGORICAL_THRESHOLD,
};
use crate::model::{Learner, LearnerKind, Model};
use crate::prediction::{PredictionMatrix, Target};
use crate::rng;
use crate::textprep::{build_vocab, merge_fields, render_cell, tokenize, Vocab, DEFAULT_MAX_LENGTH};

/// Architecture and optimization settings of a network learner; the
/// dataset-dependent sizes are filled in at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSpec {
    pub variant: Variant,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_size: usize,
    pub fuse_early_encoder: EncoderDims,
    pub cat_embed_units: usize,
    pub cat_bottleneck: usize,
    pub late_bottleneck: usize,
    pub leaky_slope: f64,
    pub vocab_size: usize,
    pub max_length: usize,
    /// Share of the training rows held out for early stopping when the
    /// caller provides no validation table.
    pub holdout_fraction: f64,
    pub train: TrainConfig,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec::new(Variant::TextOnly)
    }
}

impl NetSpec {
    pub fn new(variant: Variant) -> Self {
        let c = NetConfig::new(variant, Task::Binary);
        NetSpec {
            variant,
            hidden_size: c.hidden_size,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            ffn_size: c.ffn_size,
            fuse_early_encoder: c.fuse_early_encoder,
            cat_embed_units: c.cat_embed_units,
            cat_bottleneck: c.cat_bottleneck,
            late_bottleneck: c.late_bottleneck,
            leaky_slope: c.leaky_slope,
            vocab_size: 5000,
            max_length: DEFAULT_MAX_LENGTH,
            holdout_fraction: 0.1,
            train: TrainConfig::default(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        NetSpec {
            variant,
            ..self.clone()
        }
    }

    fn net_config(&self, task: Task) -> NetConfig {
        NetConfig {
            variant: self.variant,
            task,
            hidden_size: self.hidden_size,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_size: self.ffn_size,
            fuse_early_encoder: self.fuse_early_encoder,
            cat_embed_units: self.cat_embed_units,
            cat_bottleneck: self.cat_bottleneck,
            late_bottleneck: self.late_bottleneck,
            leaky_slope: self.leaky_slope,
            max_length: self.max_length,
            ..NetConfig::new(self.variant, task)
        }
    }
}

/// A fitted network together with everything needed to featurize raw rows.
#[derive(Debug, Clone)]
pub struct NetPipeline {
    pub schema: FeatureSchema,
    pub vocab: Vocab,
    pub net: TrainedNet,
    /// Genuine text columns, in schema order.
    pub text_columns: Vec<String>,
    /// Tabular columns rendered as extra text fields (all-text only).
    pub stringified_columns: Vec<String>,
    /// Regression target standardization `(mean, std)`.
    pub target_scale: Option<(f64, f64)>,
    pub task: Task,
}

impl NetPipeline {
    /// Builds schema, vocabulary and an untrained network from `train`.
    pub fn init(spec: &NetSpec, train: &DataTable, seed: u64) -> Result<NetPipeline> {
        let task = train.task();
        if train.target().is_none() {
            return Err(Error::Schema("network training needs a target column".into()));
        }
        let schema = infer_schema(train, DEFAULT_CATEGORICAL_THRESHOLD)?;
        let text_columns = schema.columns_of(Modality::Text);
        let (stringified_columns, numeric, categorical) = match spec.variant {
            Variant::AllText => (
                schema
                    .columns
                    .iter()
                    .filter(|(_, m)| *m != Modality::Text)
                    .map(|(n, _)| n.clone())
                    .collect(),
                Vec::new(),
                Vec::new(),
            ),
            Variant::TextOnly => (Vec::new(), Vec::new(), Vec::new()),
            Variant::FuseEarly | Variant::FuseLate => (
                Vec::new(),
                schema.columns_of(Modality::Numeric),
                schema.columns_of(Modality::Categorical),
            ),
        };
        let mut config = spec.net_config(task);
        config.n_numeric = numeric.len();
        config.categorical_sizes = categorical
            .iter()
            .map(|c| schema.categorical_vocab[c].len())
            .collect();
        config.n_text_fields = text_columns.len() + stringified_columns.len();
        config.output_dim = match task {
            Task::Multiclass => train.n_classes(),
            _ => 1,
        };

        let mut corpus = Vec::new();
        for r in 0..train.n_rows() {
            corpus.extend(row_fields(train, r, &text_columns, &stringified_columns, &schema)?);
        }
        let vocab = build_vocab(&corpus, spec.vocab_size);
        let net = build_net(&config, &vocab, seed)?;
        let target_scale = if task == Task::Regression {
            let y = train.target_values()?;
            let v = y.values().expect("regression values");
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            Some((mean, std))
        } else {
            None
        };
        Ok(NetPipeline {
            schema,
            vocab,
            net,
            text_columns,
            stringified_columns,
            target_scale,
            task,
        })
    }

    /// Fits on `train`, early-stopping on `valid` (or on a seeded holdout of
    /// `train` when none is given).
    pub fn fit(spec: &NetSpec, train_table: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<NetPipeline> {
        let (fit_rows, holdout) = match valid {
            Some(v) => (train_table.clone(), v.clone()),
            None => {
                let (a, b) = split_indices(train_table, &SplitSpec::new(spec.holdout_fraction, rng::derive_seed(seed, 11), true))?;
                (train_table.take_rows(&a), train_table.take_rows(&b))
            }
        };
        let mut pipe = NetPipeline::init(spec, &fit_rows, seed)?;
        let train_data = pipe.net_data(&fit_rows)?;
        let val_data = pipe.net_data(&holdout)?;
        let cfg = TrainConfig {
            seed: rng::derive_seed(seed, spec.train.seed),
            ..spec.train.clone()
        };
        let metric = MetricKind::for_task(pipe.task);
        pipe.net = train(pipe.net, &train_data, &val_data, &cfg, metric)?;
        Ok(pipe)
    }

    /// Network inputs for the rows of `table`.
    pub fn batch(&self, table: &DataTable) -> Result<NetBatch> {
        let c = &self.net.config;
        let enc = self.schema.transform(table)?;
        let use_tab = matches!(c.variant, Variant::FuseEarly | Variant::FuseLate);
        let n = table.n_rows();
        let mut texts = Vec::with_capacity(n);
        for r in 0..n {
            let fields: Vec<Vec<u32>> = row_fields(table, r, &self.text_columns, &self.stringified_columns, &self.schema)?
                .iter()
                .map(|f| tokenize(f, &self.vocab))
                .collect();
            texts.push(merge_fields(&fields, c.max_length)?);
        }
        let (n_numeric, n_categorical) = if use_tab {
            (enc.numeric.len(), enc.categorical.len())
        } else {
            (0, 0)
        };
        let mut numeric = Vec::with_capacity(n * n_numeric);
        let mut categorical = Vec::with_capacity(n * n_categorical);
        for r in 0..n {
            if use_tab {
                numeric.extend(enc.numeric.iter().map(|col| col.values[r]));
                categorical.extend(enc.categorical.iter().map(|col| col.codes[r]));
            }
        }
        Ok(NetBatch {
            texts,
            numeric,
            categorical,
            n_numeric,
            n_categorical,
        })
    }

    /// Batch plus (scaled) labels.
    pub fn net_data(&self, table: &DataTable) -> Result<NetData> {
        let target = match (table.target_values()?, self.target_scale) {
            (Target::Values(v), Some((mean, std))) => Target::Values(v.iter().map(|x| (x - mean) / std).collect()),
            (t, _) => t,
        };
        Ok(NetData {
            batch: self.batch(table)?,
            target,
        })
    }

    pub fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        let out = self.net.forward(&self.batch(table)?)?;
        Ok(match self.target_scale {
            Some((mean, std)) => PredictionMatrix::regression(out.values().iter().map(|p| p * std + mean).collect()),
            None => out,
        })
    }

    /// CLS (or text-branch) embedding of each row, row-major.
    pub fn embed(&self, table: &DataTable) -> Result<Vec<f64>> {
        self.net.embed(&self.batch(table)?)
    }

    pub fn embedding_width(&self) -> usize {
        self.net.embedding_width()
    }
}

/// Text fields of one row: genuine text columns, then stringified tabular
/// columns, each a separate field.
fn row_fields(
    table: &DataTable,
    row: usize,
    text_columns: &[String],
    stringified: &[String],
    schema: &FeatureSchema,
) -> Result<Vec<String>> {
    text_columns
        .iter()
        .chain(stringified)
        .map(|name| {
            let cell = table
                .cell(row, name)
                .ok_or_else(|| Error::ColumnNotFound(name.clone()))?;
            let modality = schema.modality(name).unwrap_or(Modality::Text);
            Ok(render_cell(cell, modality))
        })
        .collect()
}

/// A fitted network behind the [`Model`] interface.
#[derive(Debug, Clone)]
pub struct NetModel(pub NetPipeline);

impl Model for NetModel {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        self.0.predict(table)
    }
}

/// Learner wrapper over [`NetPipeline::fit`].
#[derive(Debug, Clone)]
pub struct NetLearner {
    pub name: String,
    pub spec: NetSpec,
}

impl NetLearner {
    pub fn new(name: impl Into<String>, spec: NetSpec) -> Self {
        NetLearner {
            name: name.into(),
            spec,
        }
    }
}

impl Learner for NetLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> LearnerKind {
        LearnerKind::Network
    }

    fn fit(&self, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(NetModel(NetPipeline::fit(&self.spec, train, valid, seed)?)))
    }
}
