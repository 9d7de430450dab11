//! Text-to-tabular featurization: n-gram count columns and learned text
//! embeddings that replace the text columns of a table.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Cell, Column, DataTable, FeatureSchema, Modality};
use crate::model::{Learner, LearnerKind, Model};
use crate::neuralnet::{NetPipeline, NetSpec, Variant};
use crate::prediction::PredictionMatrix;
use crate::textprep::split_tokens;

pub const DEFAULT_NGRAM_CAP: usize = 512;
pub const DEFAULT_MIN_DF: usize = 2;
const MAX_N: usize = 3;

/// Retained word n-grams of one text column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNgrams {
    pub column: String,
    /// n-gram → dense feature index.
    pub index: BTreeMap<String, usize>,
    /// Document frequency of every retained n-gram.
    pub document_frequency: BTreeMap<String, usize>,
}

impl ColumnNgrams {
    /// N-grams ordered by feature index.
    pub fn features(&self) -> Vec<&str> {
        let mut out = vec![""; self.index.len()];
        for (g, &i) in &self.index {
            out[i] = g;
        }
        out
    }

    pub fn feature_name(&self, ngram: &str) -> String {
        format!("{}#{}", self.column, ngram)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramVocab {
    pub columns: Vec<ColumnNgrams>,
    pub cap: usize,
    pub min_df: usize,
}

impl NgramVocab {
    pub fn n_features(&self) -> usize {
        self.columns.iter().map(|c| c.index.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<NgramVocab> {
        Ok(serde_json::from_str(json)?)
    }
}

fn ngrams(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=MAX_N {
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

fn cell_text(cell: &Cell) -> String {
    cell.as_string().unwrap_or_default()
}

/// Fits word 1/2/3-gram vocabularies for every text column of `schema`:
/// n-grams seen in fewer than `min_df` rows are dropped, then the `cap` with
/// the highest document frequency are kept (ties lexicographic).
pub fn fit_ngram(train: &DataTable, schema: &FeatureSchema, cap: usize, min_df: usize) -> Result<NgramVocab> {
    let mut columns = Vec::new();
    for name in schema.columns_of(Modality::Text) {
        let col = train
            .column(&name)
            .ok_or_else(|| Error::ColumnNotFound(name.clone()))?;
        let mut df: HashMap<String, usize> = HashMap::new();
        for cell in &col.cells {
            let unique: HashSet<String> = ngrams(&split_tokens(&cell_text(cell))).into_iter().collect();
            for g in unique {
                *df.entry(g).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= min_df).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap);
        let index = ranked.iter().enumerate().map(|(i, (g, _))| (g.clone(), i)).collect();
        columns.push(ColumnNgrams {
            column: name,
            index,
            document_frequency: ranked.into_iter().collect(),
        });
    }
    Ok(NgramVocab { columns, cap, min_df })
}

/// Occurrence counts of each retained n-gram in `text`, by feature index.
pub fn ngram_counts(vocab: &ColumnNgrams, text: &str) -> Vec<f64> {
    let mut counts = vec![0.0; vocab.index.len()];
    for g in ngrams(&split_tokens(text)) {
        if let Some(&i) = vocab.index.get(&g) {
            counts[i] += 1.0;
        }
    }
    counts
}

/// Replaces every vocabulary text column with its n-gram count columns, in
/// place; other columns are untouched.
pub fn ngram_transform(vocab: &NgramVocab, table: &DataTable) -> Result<DataTable> {
    let by_name: HashMap<&str, &ColumnNgrams> = vocab.columns.iter().map(|c| (c.column.as_str(), c)).collect();
    let mut columns = Vec::new();
    let mut hints = table.hints().clone();
    for col in table.columns() {
        let Some(cv) = by_name.get(col.name.as_str()) else {
            columns.push(col.clone());
            continue;
        };
        hints.remove(&col.name);
        let counts: Vec<Vec<f64>> = col.cells.iter().map(|c| ngram_counts(cv, &cell_text(c))).collect();
        for (j, g) in cv.features().into_iter().enumerate() {
            let name = cv.feature_name(g);
            hints.insert(name.clone(), Modality::Numeric);
            columns.push(Column::new(name, counts.iter().map(|r| Cell::Numeric(r[j])).collect()));
        }
    }
    for cv in &vocab.columns {
        if table.column(&cv.column).is_none() {
            return Err(Error::ColumnNotFound(cv.column.clone()));
        }
    }
    table.with_columns(columns, hints)
}

/// How the text encoder behind an embedding featurizer was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Randomly initialized, never trained (frozen).
    PreEmbedding,
    /// Text-only network fine-tuned on the labels.
    TextEmbedding,
    /// Fuse-late network fine-tuned on the labels; its text branch is used.
    MultimodalEmbedding,
}

/// A fitted text encoder used as a featurizer.
#[derive(Debug, Clone)]
pub struct EmbeddingMode {
    pub kind: EmbeddingKind,
    pub encoder: NetPipeline,
}

pub const EMBEDDING_PREFIX: &str = "emb_";

impl EmbeddingMode {
    /// Builds the encoder for `kind` from `train`. Only the two fine-tuned
    /// kinds read labels (and `valid`, for early stopping).
    pub fn fit(kind: EmbeddingKind, spec: &NetSpec, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Self> {
        let encoder = match kind {
            EmbeddingKind::PreEmbedding => NetPipeline::init(&spec.with_variant(Variant::TextOnly), train, seed)?,
            EmbeddingKind::TextEmbedding => NetPipeline::fit(&spec.with_variant(Variant::TextOnly), train, valid, seed)?,
            EmbeddingKind::MultimodalEmbedding => NetPipeline::fit(&spec.with_variant(Variant::FuseLate), train, valid, seed)?,
        };
        Ok(EmbeddingMode { kind, encoder })
    }
}

/// Replaces all text columns of `table` jointly by the encoder's embedding
/// columns `emb_0..emb_{d-1}`; numeric and categorical columns are kept as
/// they are. Tables without text columns pass through unchanged.
pub fn embed_transform(mode: &EmbeddingMode, table: &DataTable) -> Result<DataTable> {
    let text_cols = &mode.encoder.text_columns;
    if text_cols.is_empty() {
        log::warn!("no text columns to embed; table left unchanged");
        return Ok(table.clone());
    }
    let d = mode.encoder.embedding_width();
    let emb = mode.encoder.embed(table)?;
    let mut hints = table.hints().clone();
    let mut columns: Vec<Column> = table
        .columns()
        .iter()
        .filter(|c| !text_cols.contains(&c.name))
        .cloned()
        .collect();
    for t in text_cols {
        hints.remove(t);
    }
    for j in 0..d {
        let name = format!("{EMBEDDING_PREFIX}{j}");
        hints.insert(name.clone(), Modality::Numeric);
        columns.push(Column::new(
            name,
            (0..table.n_rows()).map(|r| Cell::Numeric(emb[r * d + j])).collect(),
        ));
    }
    table.with_columns(columns, hints)
}

/// A learner that first replaces text by embeddings, then fits `inner`.
pub struct EmbeddingLearner {
    pub name: String,
    pub kind: EmbeddingKind,
    pub spec: NetSpec,
    pub inner: Box<dyn Learner>,
}

struct EmbeddedModel {
    mode: EmbeddingMode,
    inner: Box<dyn Model>,
}

impl Model for EmbeddedModel {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        self.inner.predict(&embed_transform(&self.mode, table)?)
    }
}

impl Learner for EmbeddingLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> LearnerKind {
        LearnerKind::Network
    }

    fn fit(&self, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>> {
        let mode = EmbeddingMode::fit(self.kind, &self.spec, train, valid, seed)?;
        let train_x = embed_transform(&mode, train)?;
        let valid_x = valid.map(|v| embed_transform(&mode, v)).transpose()?;
        let inner = self.inner.fit(&train_x, valid_x.as_ref(), seed)?;
        Ok(Box::new(EmbeddedModel { mode, inner }))
    }
}
