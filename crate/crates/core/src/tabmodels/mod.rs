//! Tabular model zoo: extremely randomized trees, two gradient-boosting
//! presets and a small MLP, behind one predictor type.

mod gbm;
mod mlp;
mod randomized;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{fit_ngram, ngram_transform, NgramVocab, DEFAULT_MIN_DF, DEFAULT_NGRAM_CAP};
use crate::frame::{infer_schema, DataTable, EncodedTable, FeatureSchema, Modality, Task, DEFAULT_CATEGORICAL_THRESHOLD};
use crate::model::{Learner, LearnerKind, Model};
use crate::prediction::{PredictionMatrix, Target};

pub use gbm::{GbmModel, GbmPreset};
pub use mlp::MlpModel;
pub use randomized::ErtModel;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<usize>, n_levels: usize },
}

/// Column-major model input: standardized numerics and category indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub names: Vec<String>,
    pub columns: Vec<FeatureColumn>,
}

impl FeatureMatrix {
    pub fn from_encoded(enc: &EncodedTable) -> FeatureMatrix {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for c in &enc.numeric {
            names.push(c.name.clone());
            columns.push(FeatureColumn::Numeric(c.values.clone()));
        }
        for c in &enc.categorical {
            names.push(c.name.clone());
            columns.push(FeatureColumn::Categorical {
                codes: c.codes.clone(),
                n_levels: c.n_levels,
            });
        }
        FeatureMatrix {
            n_rows: enc.n_rows,
            names,
            columns,
        }
    }

    pub fn numeric_value(&self, feature: usize, row: usize) -> f64 {
        match &self.columns[feature] {
            FeatureColumn::Numeric(v) => v[row],
            FeatureColumn::Categorical { codes, .. } => codes[row] as f64,
        }
    }

    pub fn category(&self, feature: usize, row: usize) -> usize {
        match &self.columns[feature] {
            FeatureColumn::Categorical { codes, .. } => codes[row],
            FeatureColumn::Numeric(v) => v[row] as usize,
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: rows.len(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| match c {
                    FeatureColumn::Numeric(v) => FeatureColumn::Numeric(rows.iter().map(|&r| v[r]).collect()),
                    FeatureColumn::Categorical { codes, n_levels } => FeatureColumn::Categorical {
                        codes: rows.iter().map(|&r| codes[r]).collect(),
                        n_levels: *n_levels,
                    },
                })
                .collect(),
        }
    }
}

/// Which model family a predictor holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabKind {
    Ert,
    GbmA,
    GbmB,
    TabMlp,
}

impl TabKind {
    pub const ALL: [TabKind; 4] = [TabKind::Ert, TabKind::GbmA, TabKind::GbmB, TabKind::TabMlp];

    pub fn name(self) -> &'static str {
        match self {
            TabKind::Ert => "ert",
            TabKind::GbmA => "gbm_a",
            TabKind::GbmB => "gbm_b",
            TabKind::TabMlp => "tab_mlp",
        }
    }
}

/// What a tabular learner does with text columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextHandling {
    Drop,
    Ngram { cap: usize, min_df: usize },
}

impl TextHandling {
    pub fn ngram() -> Self {
        TextHandling::Ngram {
            cap: DEFAULT_NGRAM_CAP,
            min_df: DEFAULT_MIN_DF,
        }
    }
}

/// Model-specific fitted state.
#[derive(Debug, Clone)]
pub enum Fitted {
    /// Degenerate target: one fixed output row.
    Constant(Vec<f64>),
    Ert(ErtModel),
    Gbm(GbmModel),
    Mlp(MlpModel),
}

/// A fitted tabular model together with its input pipeline.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub kind: TabKind,
    pub task: Task,
    /// Output columns: 1 for regression, the class count otherwise.
    pub width: usize,
    /// Raw feature columns expected at predict time.
    pub signature: Vec<(String, Modality)>,
    pub ngram: Option<NgramVocab>,
    /// Schema of the featurized table.
    pub schema: FeatureSchema,
    pub fitted: Fitted,
}

/// Fits a predictor of `kind` on `train`.
pub fn fit_predictor(kind: TabKind, text: TextHandling, train: &DataTable, seed: u64) -> Result<Predictor> {
    if train.target().is_none() {
        return Err(Error::Schema("tabular training needs a target column".into()));
    }
    if train.n_rows() < 2 {
        return Err(Error::InvalidArgument("tabular training needs at least 2 rows".into()));
    }
    let raw = infer_schema(train, DEFAULT_CATEGORICAL_THRESHOLD)?;
    let ngram = match text {
        TextHandling::Ngram { cap, min_df } if !raw.columns_of(Modality::Text).is_empty() => {
            Some(fit_ngram(train, &raw, cap, min_df)?)
        }
        _ => None,
    };
    let featurized = featurize(train, &raw, ngram.as_ref())?;
    let schema = infer_schema(&featurized, DEFAULT_CATEGORICAL_THRESHOLD)?;
    let x = FeatureMatrix::from_encoded(&schema.transform(&featurized)?);
    let y = train.target_values()?;
    let task = train.task();
    let width = match task {
        Task::Regression => 1,
        _ => train.n_classes(),
    };
    let fitted = match constant_output(&y, width) {
        Some(c) => {
            log::warn!("{}: target is constant, fitting a constant predictor", kind.name());
            Fitted::Constant(c)
        }
        None => match kind {
            TabKind::Ert => Fitted::Ert(ErtModel::fit(&x, &y, task, width, randomized::DEFAULT_TREES, seed)?),
            TabKind::GbmA => Fitted::Gbm(GbmModel::fit(&x, &y, task, width, GbmPreset::A, seed)?),
            TabKind::GbmB => Fitted::Gbm(GbmModel::fit(&x, &y, task, width, GbmPreset::B, seed)?),
            TabKind::TabMlp => Fitted::Mlp(MlpModel::fit(&x, &y, task, width, seed)?),
        },
    };
    Ok(Predictor {
        kind,
        task,
        width,
        signature: raw.columns.clone(),
        ngram,
        schema,
        fitted,
    })
}

/// Drops text columns not covered by `ngram`, then expands the rest.
fn featurize(table: &DataTable, raw: &FeatureSchema, ngram: Option<&NgramVocab>) -> Result<DataTable> {
    let text: Vec<String> = raw.columns_of(Modality::Text);
    let keep: Vec<_> = table
        .columns()
        .iter()
        .filter(|c| ngram.is_some() || !text.contains(&c.name))
        .cloned()
        .collect();
    let mut hints: BTreeMap<String, Modality> = raw.columns.iter().cloned().collect();
    if ngram.is_none() {
        for t in &text {
            hints.remove(t);
        }
    }
    let dropped = table.with_columns(keep, hints)?;
    match ngram {
        Some(v) => ngram_transform(v, &dropped),
        None => Ok(dropped),
    }
}

fn constant_output(y: &Target, width: usize) -> Option<Vec<f64>> {
    match y {
        Target::Values(v) => v.iter().all(|x| *x == v[0]).then(|| vec![v[0]]),
        Target::Classes { labels, .. } => labels.iter().all(|l| *l == labels[0]).then(|| {
            let mut p = vec![0.0; width];
            p[labels[0]] = 1.0;
            p
        }),
    }
}

impl Predictor {
    fn check_signature(&self, table: &DataTable) -> Result<()> {
        let have: Vec<String> = table.feature_names();
        let missing: Vec<&str> = self
            .signature
            .iter()
            .map(|(n, _)| n.as_str())
            .filter(|n| !have.iter().any(|h| h == n))
            .collect();
        let extra: Vec<&str> = have
            .iter()
            .map(String::as_str)
            .filter(|h| !self.signature.iter().any(|(n, _)| n == h))
            .collect();
        if missing.is_empty() && extra.is_empty() {
            Ok(())
        } else {
            Err(Error::Signature {
                columns: missing.iter().chain(&extra).map(|s| s.to_string()).collect(),
            })
        }
    }

    /// Featurized input matrix for `table`.
    pub fn features(&self, table: &DataTable) -> Result<FeatureMatrix> {
        self.check_signature(table)?;
        let raw = FeatureSchema {
            columns: self.signature.clone(),
            ..FeatureSchema::default()
        };
        let featurized = featurize(table, &raw, self.ngram.as_ref())?;
        Ok(FeatureMatrix::from_encoded(&self.schema.transform(&featurized)?))
    }

    pub fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        if table.n_rows() == 0 {
            self.check_signature(table)?;
            return Ok(PredictionMatrix::empty(self.task, self.width));
        }
        let x = self.features(table)?;
        let values = match &self.fitted {
            Fitted::Constant(c) => c.repeat(x.n_rows),
            Fitted::Ert(m) => m.predict(&x),
            Fitted::Gbm(m) => m.predict(&x),
            Fitted::Mlp(m) => m.predict(&x)?,
        };
        PredictionMatrix::new(self.task, self.width, values)
    }
}

impl Model for Predictor {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        Predictor::predict(self, table)
    }
}

/// Learner producing [`Predictor`]s of one kind.
#[derive(Debug, Clone)]
pub struct TabularLearner {
    pub kind: TabKind,
    pub text: TextHandling,
}

impl TabularLearner {
    pub fn new(kind: TabKind, text: TextHandling) -> Self {
        TabularLearner { kind, text }
    }
}

impl Learner for TabularLearner {
    fn name(&self) -> String {
        match self.text {
            TextHandling::Drop => self.kind.name().to_string(),
            TextHandling::Ngram { .. } => format!("{}_ngram", self.kind.name()),
        }
    }

    fn kind(&self) -> LearnerKind {
        LearnerKind::Tabular
    }

    fn fit(&self, train: &DataTable, _valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(fit_predictor(self.kind, self.text, train, seed)?))
    }
}

/// Per-row targets in residual form: one-hot rows for classification, the
/// value for regression.
pub(crate) fn one_hot(y: &Target, width: usize) -> Vec<f64> {
    match y {
        Target::Values(v) => v.clone(),
        Target::Classes { labels, .. } => {
            let mut out = vec![0.0; labels.len() * width];
            for (i, &l) in labels.iter().enumerate() {
                out[i * width + l] = 1.0;
            }
            out
        }
    }
}
