//! Weighted ensembles by greedy ensemble selection, and one-level stack
//! ensembles over out-of-fold bagged predictions.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{score, MetricKind};
use crate::frame::{infer_schema, split_indices, Cell, Column, DataTable, Modality, SplitSpec, Task, DEFAULT_CATEGORICAL_THRESHOLD};
use crate::model::{Learner, LearnerKind, Model};
use crate::prediction::{PredictionMatrix, Target};
use crate::rng;

pub const DEFAULT_ROUNDS: usize = 100;
pub const DEFAULT_FOLDS: usize = 5;

/// Quantity maximized by ensemble selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Metric(MetricKind),
    /// Negated mean squared error of the (single-column) predictions.
    NegSquaredError,
}

impl Objective {
    pub fn evaluate(self, preds: &PredictionMatrix, y: &Target) -> Result<f64> {
        match self {
            Objective::Metric(k) => score(k, preds, y),
            Objective::NegSquaredError => {
                let v = y
                    .values()
                    .ok_or_else(|| Error::Metric("squared error needs numeric labels".into()))?;
                if preds.width() != 1 || preds.n_rows() != v.len() {
                    return Err(Error::Metric("squared error needs one prediction per label".into()));
                }
                Ok(-preds.values().iter().zip(v).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / v.len() as f64)
            }
        }
    }
}

/// Sparse convex weights keyed by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub weights: BTreeMap<String, f64>,
}

impl EnsembleWeights {
    pub fn from_vec(ids: &[String], w: &[f64]) -> Self {
        EnsembleWeights {
            weights: ids
                .iter()
                .zip(w)
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| (i.clone(), *w))
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> f64 {
        self.weights.get(id).copied().unwrap_or(0.0)
    }
}

/// Greedy forward selection with replacement. Each round adds the model
/// whose inclusion gives the best objective for the uniform average of the
/// selected multiset (ties to the lowest index); after all rounds the best
/// scoring prefix of the selection sequence is kept, so the result is never
/// worse than the best single model. Returns one weight per model.
pub fn ensemble_selection(preds: &[&PredictionMatrix], y: &Target, objective: Objective, rounds: usize) -> Result<Vec<f64>> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("ensemble selection needs at least one round".into()));
    }
    let first = preds
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble selection needs at least one model".into()))?;
    if preds.iter().any(|p| p.n_rows() != first.n_rows() || p.width() != first.width()) || first.n_rows() != y.len() {
        return Err(Error::InvalidArgument("prediction matrices are not aligned with the labels".into()));
    }
    if preds.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut sum = PredictionMatrix::zeros(first.task(), first.n_rows(), first.width());
    let mut counts = vec![0usize; preds.len()];
    let mut best_counts = counts.clone();
    let mut best_score = f64::NEG_INFINITY;
    for m in 1..=rounds {
        let inv = 1.0 / m as f64;
        let scored: Vec<f64> = preds
            .par_iter()
            .map(|p| {
                let cand = PredictionMatrix::weighted_sum(&[(&sum, inv), (p, inv)])?;
                objective.evaluate(&cand, y)
            })
            .collect::<Result<_>>()?;
        let mut pick = 0;
        for (i, s) in scored.iter().enumerate() {
            if *s > scored[pick] {
                pick = i;
            }
        }
        sum = PredictionMatrix::weighted_sum(&[(&sum, 1.0), (preds[pick], 1.0)])?;
        counts[pick] += 1;
        if scored[pick] > best_score {
            best_score = scored[pick];
            best_counts = counts.clone();
        }
    }
    let total: usize = best_counts.iter().sum();
    Ok(best_counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `sum_i w_i * preds_i`.
pub fn predict_weighted(preds: &[&PredictionMatrix], weights: &[f64]) -> Result<PredictionMatrix> {
    if preds.len() != weights.len() {
        return Err(Error::InvalidArgument("one weight per model is required".into()));
    }
    let parts: Vec<(&PredictionMatrix, f64)> = preds.iter().copied().zip(weights.iter().copied()).collect();
    PredictionMatrix::weighted_sum(&parts)
}

/// Fold index per row: rows are shuffled within each class (all rows for
/// regression), classes concatenated in label order, then dealt round-robin
/// so fold sizes differ by at most one and classes spread evenly.
pub fn fold_assignment(table: &DataTable, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = table.n_rows();
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!("{k}-fold split of {n} rows")));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, 0x666f6c64));
    let groups: Vec<Vec<usize>> = match table.target_values()? {
        Target::Classes { labels, n_classes } => {
            let mut g = vec![Vec::new(); n_classes];
            for (i, &l) in labels.iter().enumerate() {
                g[l].push(i);
            }
            g
        }
        Target::Values(_) => vec![(0..n).collect()],
    };
    let mut folds = vec![0; n];
    let mut pos = 0;
    for mut g in groups {
        g.shuffle(&mut r);
        for row in g {
            folds[row] = pos % k;
            pos += 1;
        }
    }
    Ok(folds)
}

/// Training rows of each fold model.
pub fn fold_train_rows(folds: &[usize], k: usize) -> Vec<Vec<usize>> {
    (0..k)
        .map(|f| (0..folds.len()).filter(|&r| folds[r] != f).collect())
        .collect()
}

/// A model fitted k times on k-1 folds each.
pub struct OofModel {
    pub name: String,
    pub fold_models: Vec<Box<dyn Model>>,
    /// Training rows seen by each fold model.
    pub fold_train_rows: Vec<Vec<usize>>,
    /// Row r predicted by fold model `folds[r]`.
    pub oof: PredictionMatrix,
}

impl OofModel {
    /// Bagged prediction: mean over the fold models.
    pub fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        let preds = self
            .fold_models
            .iter()
            .map(|m| m.predict(table))
            .collect::<Result<Vec<_>>>()?;
        let w = 1.0 / preds.len() as f64;
        PredictionMatrix::weighted_sum(&preds.iter().map(|p| (p, w)).collect::<Vec<_>>())
    }
}

impl Model for OofModel {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        OofModel::predict(self, table)
    }
}

/// Out-of-fold fits of several models over one fold assignment.
pub struct OofRecord {
    pub k: usize,
    pub fold_assignment: Vec<usize>,
    pub models: Vec<OofModel>,
}

impl OofRecord {
    /// Checks that every out-of-fold row came from a model that never
    /// trained on it.
    pub fn verify(&self) -> Result<()> {
        for m in &self.models {
            for (r, &f) in self.fold_assignment.iter().enumerate() {
                if m.fold_train_rows[f].binary_search(&r).is_ok() {
                    return Err(Error::InvalidArgument(format!("{}: row {r} leaked into fold {f}", m.name)));
                }
            }
        }
        Ok(())
    }
}

/// Fits `learner` once per fold and assembles its out-of-fold predictions.
/// `valid`, when given, is passed to every fold fit for early stopping.
pub fn oof_fit(
    learner: &dyn Learner,
    table: &DataTable,
    valid: Option<&DataTable>,
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<OofModel> {
    if folds.len() != table.n_rows() || folds.iter().any(|&f| f >= k) {
        return Err(Error::InvalidArgument("fold assignment does not match the table".into()));
    }
    let train_rows = fold_train_rows(folds, k);
    let fits: Vec<(Box<dyn Model>, PredictionMatrix, Vec<usize>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let held: Vec<usize> = (0..folds.len()).filter(|&r| folds[r] == f).collect();
            let train = table.take_rows(&train_rows[f]);
            if let Target::Classes { labels, n_classes } = train.target_values()? {
                let present: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
                if present.len() < n_classes {
                    log::warn!("{}: fold {f} is missing {} class(es)", learner.name(), n_classes - present.len());
                }
            }
            let model = learner.fit(&train, valid, rng::derive_seed(seed, f as u64))?;
            let p = model.predict(&table.take_rows(&held))?;
            Ok((model, p, held))
        })
        .collect::<Result<_>>()?;
    let (task, width) = (fits[0].1.task(), fits[0].1.width());
    let mut oof = PredictionMatrix::zeros(task, table.n_rows(), width);
    let mut fold_models = Vec::with_capacity(k);
    for (model, p, held) in fits {
        oof.scatter_rows(&held, &p);
        fold_models.push(model);
    }
    Ok(OofModel {
        name: learner.name(),
        fold_models,
        fold_train_rows: train_rows,
        oof,
    })
}

/// Models fitted on a common split and mixed with ensemble-selection
/// weights.
pub struct WeightedEnsemble {
    pub ids: Vec<String>,
    pub models: Vec<Box<dyn Model>>,
    pub weights: Vec<f64>,
}

impl WeightedEnsemble {
    pub fn ensemble_weights(&self) -> EnsembleWeights {
        EnsembleWeights::from_vec(&self.ids, &self.weights)
    }

    /// Member predictions, kept only for models with non-zero weight.
    pub fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        let mut parts = Vec::new();
        for (m, &w) in self.models.iter().zip(&self.weights) {
            if w > 0.0 {
                parts.push((m.predict(table)?, w));
            }
        }
        PredictionMatrix::weighted_sum(&parts.iter().map(|(p, w)| (p, *w)).collect::<Vec<_>>())
    }
}

impl Model for WeightedEnsemble {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        WeightedEnsemble::predict(self, table)
    }
}

fn objective_for(task: Task) -> Objective {
    Objective::Metric(MetricKind::for_task(task))
}

/// Holds out a stratified share of `train` when no validation table exists.
fn ensure_valid(train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<(DataTable, DataTable)> {
    match valid {
        Some(v) => Ok((train.clone(), v.clone())),
        None => {
            let (a, b) = split_indices(train, &SplitSpec::new(0.1, rng::derive_seed(seed, 0x76616c), true))?;
            Ok((train.take_rows(&a), train.take_rows(&b)))
        }
    }
}

/// Fits every learner on `train` and selects weights on `valid`.
pub fn fit_weighted(
    learners: &[Arc<dyn Learner>],
    train: &DataTable,
    valid: Option<&DataTable>,
    seed: u64,
    rounds: usize,
) -> Result<WeightedEnsemble> {
    let (train, valid) = ensure_valid(train, valid, seed)?;
    let fitted: Vec<(Box<dyn Model>, PredictionMatrix)> = learners
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            let m = l.fit(&train, Some(&valid), rng::derive_seed(seed, i as u64))?;
            let p = m.predict(&valid)?;
            Ok((m, p))
        })
        .collect::<Result<_>>()?;
    let y = valid.target_values()?;
    let preds: Vec<&PredictionMatrix> = fitted.iter().map(|(_, p)| p).collect();
    let weights = ensemble_selection(&preds, &y, objective_for(train.task()), rounds)?;
    Ok(WeightedEnsemble {
        ids: learners.iter().map(|l| l.name()).collect(),
        models: fitted.into_iter().map(|(m, _)| m).collect(),
        weights,
    })
}

pub const PREDICTION_PREFIX: &str = "pred:";

/// Stacker input: the table's non-text feature columns (and target) plus one
/// column per base model output.
pub fn stack_features(table: &DataTable, text_columns: &[String], base: &[(String, &PredictionMatrix)]) -> Result<DataTable> {
    let mut columns: Vec<Column> = table
        .columns()
        .iter()
        .filter(|c| !text_columns.contains(&c.name))
        .cloned()
        .collect();
    let mut hints = table.hints().clone();
    for t in text_columns {
        hints.remove(t);
    }
    for (name, p) in base {
        if p.n_rows() != table.n_rows() {
            return Err(Error::InvalidArgument(format!("{name}: prediction rows do not match the table")));
        }
        for j in 0..p.width() {
            let col = format!("{PREDICTION_PREFIX}{name}:{j}");
            hints.insert(col.clone(), Modality::Numeric);
            columns.push(Column::new(col, (0..p.n_rows()).map(|r| Cell::Numeric(p.get(r, j))).collect()));
        }
    }
    table.with_columns(columns, hints)
}

/// Bagged base layer, bagged tabular stackers on base predictions plus
/// original tabular columns, and selection weights over the stackers.
pub struct StackEnsemble {
    pub k: usize,
    pub fold_assignment: Vec<usize>,
    pub text_columns: Vec<String>,
    pub base: Vec<OofModel>,
    pub stackers: Vec<OofModel>,
    pub weights: Vec<f64>,
}

impl StackEnsemble {
    pub fn stacker_ids(&self) -> Vec<String> {
        self.stackers.iter().map(|s| s.name.clone()).collect()
    }

    pub fn ensemble_weights(&self) -> EnsembleWeights {
        EnsembleWeights::from_vec(&self.stacker_ids(), &self.weights)
    }

    fn features(&self, table: &DataTable) -> Result<DataTable> {
        let preds = self.base.iter().map(|b| b.predict(table)).collect::<Result<Vec<_>>>()?;
        let named: Vec<(String, &PredictionMatrix)> = self.base.iter().map(|b| b.name.clone()).zip(preds.iter()).collect();
        stack_features(table, &self.text_columns, &named)
    }

    /// Per-stacker predictions for `table`.
    pub fn stacker_predictions(&self, table: &DataTable) -> Result<Vec<PredictionMatrix>> {
        let x = self.features(table)?;
        self.stackers.iter().map(|s| s.predict(&x)).collect()
    }

    pub fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        let preds = self.stacker_predictions(table)?;
        predict_weighted(&preds.iter().collect::<Vec<_>>(), &self.weights)
    }
}

impl Model for StackEnsemble {
    fn predict(&self, table: &DataTable) -> Result<PredictionMatrix> {
        StackEnsemble::predict(self, table)
    }
}

/// Fits a stack ensemble. Base models are OOF-fitted on `train`; stackers
/// (tabular learners only) are OOF-fitted on the stacker features; the final
/// weights are selected on the stackers' out-of-fold predictions, which
/// cover every training row. `valid` only drives early stopping of base
/// networks.
pub fn fit_stack(
    train: &DataTable,
    valid: Option<&DataTable>,
    base: &[Arc<dyn Learner>],
    stackers: &[Arc<dyn Learner>],
    k: usize,
    seed: u64,
    rounds: usize,
) -> Result<StackEnsemble> {
    if base.is_empty() || stackers.is_empty() {
        return Err(Error::InvalidArgument("a stack needs base models and stackers".into()));
    }
    if let Some(s) = stackers.iter().find(|s| s.kind() != LearnerKind::Tabular) {
        return Err(Error::InvalidArgument(format!(
            "{} cannot be a stacker: only tabular models may stack",
            s.name()
        )));
    }
    let folds = fold_assignment(train, k, seed)?;
    let schema = infer_schema(train, DEFAULT_CATEGORICAL_THRESHOLD)?;
    let text_columns = schema.columns_of(Modality::Text);
    let base_fits = base
        .iter()
        .enumerate()
        .map(|(i, l)| oof_fit(l.as_ref(), train, valid, &folds, k, rng::derive_seed(seed, 100 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<(String, &PredictionMatrix)> = base_fits.iter().map(|b| (b.name.clone(), &b.oof)).collect();
    let x = stack_features(train, &text_columns, &named)?;
    let stack_fits = stackers
        .iter()
        .enumerate()
        .map(|(i, l)| oof_fit(l.as_ref(), &x, None, &folds, k, rng::derive_seed(seed, 200 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut ensemble = StackEnsemble {
        k,
        fold_assignment: folds,
        text_columns,
        base: base_fits,
        stackers: stack_fits,
        weights: Vec::new(),
    };
    let preds: Vec<&PredictionMatrix> = ensemble.stackers.iter().map(|s| &s.oof).collect();
    ensemble.weights = ensemble_selection(&preds, &train.target_values()?, objective_for(train.task()), rounds)?;
    Ok(ensemble)
}

/// Learner wrapper over [`fit_weighted`].
pub struct WeightedLearner {
    pub name: String,
    pub members: Vec<Arc<dyn Learner>>,
    pub rounds: usize,
}

impl Learner for WeightedLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> LearnerKind {
        if self.members.iter().all(|m| m.kind() == LearnerKind::Tabular) {
            LearnerKind::Tabular
        } else {
            LearnerKind::Network
        }
    }

    fn fit(&self, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(fit_weighted(&self.members, train, valid, seed, self.rounds)?))
    }
}

/// Learner wrapper over [`fit_stack`].
pub struct StackLearner {
    pub name: String,
    pub base: Vec<Arc<dyn Learner>>,
    pub stackers: Vec<Arc<dyn Learner>>,
    pub k: usize,
    pub rounds: usize,
}

impl Learner for StackLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn kind(&self) -> LearnerKind {
        if self.base.iter().all(|m| m.kind() == LearnerKind::Tabular) {
            LearnerKind::Tabular
        } else {
            LearnerKind::Network
        }
    }

    fn fit(&self, train: &DataTable, valid: Option<&DataTable>, seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(fit_stack(train, valid, &self.base, &self.stackers, self.k, seed, self.rounds)?))
    }
}

/// Audit record of a fitted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub kind: String,
    pub seed: u64,
    pub members: Vec<String>,
    pub weights: EnsembleWeights,
    pub k: Option<usize>,
    pub fold_assignment: Option<Vec<usize>>,
}

impl EnsembleManifest {
    pub fn for_weighted(e: &WeightedEnsemble, seed: u64) -> Self {
        EnsembleManifest {
            kind: "weighted".into(),
            seed,
            members: e.ids.clone(),
            weights: e.ensemble_weights(),
            k: None,
            fold_assignment: None,
        }
    }

    pub fn for_stack(e: &StackEnsemble, seed: u64) -> Self {
        EnsembleManifest {
            kind: "stack".into(),
            seed,
            members: e.base.iter().map(|b| b.name.clone()).chain(e.stacker_ids()).collect(),
            weights: e.ensemble_weights(),
            k: Some(e.k),
            fold_assignment: Some(e.fold_assignment.clone()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
