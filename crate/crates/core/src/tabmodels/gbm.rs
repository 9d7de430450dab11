//! Gradient-boosted trees: squared loss for regression, log-loss (logistic
//! or softmax) for classification.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::{grow_greedy, GrowOptions, Prepared, Stats, Tree};
use super::{one_hot, FeatureColumn, FeatureMatrix};
use crate::error::Result;
use crate::frame::Task;
use crate::neuralnet::tape::{sigmoid, softmax_rows};
use crate::prediction::Target;
use crate::rng;

/// Two hyperparameter sets standing in for the default and the tuned
/// boosting models of the zoo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GbmPreset {
    /// 100 trees, depth 6, lr 0.1, exact splits.
    A,
    /// 150 trees, depth 4, lr 0.05, 63-bin histograms, target-statistic
    /// encoded categoricals.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub max_bins: Option<usize>,
    pub target_statistics: bool,
}

impl GbmPreset {
    pub fn params(self) -> GbmParams {
        match self {
            GbmPreset::A => GbmParams {
                n_trees: 100,
                max_depth: 6,
                learning_rate: 0.1,
                min_leaf: 20,
                max_bins: None,
                target_statistics: false,
            },
            GbmPreset::B => GbmParams {
                n_trees: 150,
                max_depth: 4,
                learning_rate: 0.05,
                min_leaf: 20,
                max_bins: Some(63),
                target_statistics: true,
            },
        }
    }
}

const TS_FOLDS: usize = 5;
const TS_SMOOTHING: f64 = 10.0;

/// Smoothed per-category target means replacing categorical columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoder {
    /// Output dims per encoded column.
    pub k: usize,
    pub prior: Vec<f64>,
    /// Per categorical feature index: per-level encoded vector.
    pub tables: Vec<Option<Vec<Vec<f64>>>>,
}

impl TargetEncoder {
    fn stats(x: &FeatureMatrix, t: &[f64], k: usize, rows: &[usize], prior: &[f64]) -> Vec<Option<Vec<Vec<f64>>>> {
        x.columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Categorical { codes, n_levels } => {
                    let mut sum = vec![vec![0.0; k]; *n_levels];
                    let mut count = vec![0.0; *n_levels];
                    for &r in rows {
                        count[codes[r]] += 1.0;
                        for j in 0..k {
                            sum[codes[r]][j] += t[r * k + j];
                        }
                    }
                    Some(
                        (0..*n_levels)
                            .map(|l| {
                                (0..k)
                                    .map(|j| (sum[l][j] + TS_SMOOTHING * prior[j]) / (count[l] + TS_SMOOTHING))
                                    .collect()
                            })
                            .collect(),
                    )
                }
                FeatureColumn::Numeric(_) => None,
            })
            .collect()
    }

    /// Fits on all rows and returns the training matrix encoded out of fold.
    fn fit(x: &FeatureMatrix, t: &[f64], k: usize, seed: u64) -> (TargetEncoder, FeatureMatrix) {
        let n = x.n_rows;
        let mut prior = vec![0.0; k];
        for r in 0..n {
            for j in 0..k {
                prior[j] += t[r * k + j] / n as f64;
            }
        }
        let all: Vec<usize> = (0..n).collect();
        let enc = TargetEncoder {
            k,
            tables: Self::stats(x, t, k, &all, &prior),
            prior: prior.clone(),
        };
        let mut order = all.clone();
        order.shuffle(&mut rng::seeded(rng::derive_seed(seed, 0x7473)));
        let mut fold_of = vec![0; n];
        for (pos, &r) in order.iter().enumerate() {
            fold_of[r] = pos % TS_FOLDS;
        }
        let mut oof: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n]; x.columns.len()];
        for f in 0..TS_FOLDS {
            let fit_rows: Vec<usize> = all.iter().copied().filter(|&r| fold_of[r] != f).collect();
            let tables = Self::stats(x, t, k, &fit_rows, &prior);
            for (c, table) in tables.iter().enumerate() {
                if let (Some(table), FeatureColumn::Categorical { codes, .. }) = (table, &x.columns[c]) {
                    for r in all.iter().copied().filter(|&r| fold_of[r] == f) {
                        oof[c][r] = Some(table[codes[r]].clone());
                    }
                }
            }
        }
        let encoded = enc.apply_with(x, |c, r| oof[c][r].clone().expect("every row has a fold"));
        (enc, encoded)
    }

    fn apply(&self, x: &FeatureMatrix) -> FeatureMatrix {
        self.apply_with(x, |c, r| {
            let table = self.tables[c].as_ref().expect("categorical");
            table.get(x.category(c, r)).cloned().unwrap_or_else(|| self.prior.clone())
        })
    }

    fn apply_with(&self, x: &FeatureMatrix, value: impl Fn(usize, usize) -> Vec<f64>) -> FeatureMatrix {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for (c, col) in x.columns.iter().enumerate() {
            match col {
                FeatureColumn::Numeric(v) => {
                    names.push(x.names[c].clone());
                    columns.push(FeatureColumn::Numeric(v.clone()));
                }
                FeatureColumn::Categorical { .. } => {
                    let rows: Vec<Vec<f64>> = (0..x.n_rows).map(|r| value(c, r)).collect();
                    for j in 0..self.k {
                        names.push(format!("{}~ts{j}", x.names[c]));
                        columns.push(FeatureColumn::Numeric(rows.iter().map(|v| v[j]).collect()));
                    }
                }
            }
        }
        FeatureMatrix {
            n_rows: x.n_rows,
            names,
            columns,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbmModel {
    pub preset: GbmPreset,
    pub params: GbmParams,
    pub task: Task,
    /// Raw outputs per row: 1 for regression and binary, classes otherwise.
    pub k: usize,
    pub init: Vec<f64>,
    pub trees: Vec<Tree>,
    pub encoder: Option<TargetEncoder>,
    /// Training loss after each stage.
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn fit(x: &FeatureMatrix, y: &Target, task: Task, width: usize, preset: GbmPreset, seed: u64) -> Result<GbmModel> {
        Self::fit_with(x, y, task, width, preset, preset.params(), seed)
    }

    pub fn fit_with(
        x: &FeatureMatrix,
        y: &Target,
        task: Task,
        width: usize,
        preset: GbmPreset,
        params: GbmParams,
        seed: u64,
    ) -> Result<GbmModel> {
        let n = x.n_rows;
        let k = if task == Task::Multiclass { width } else { 1 };
        let targets: Vec<f64> = match (task, y) {
            (Task::Binary, Target::Classes { labels, .. }) => labels.iter().map(|&l| l as f64).collect(),
            _ => one_hot(y, k),
        };
        let (encoder, x) = if params.target_statistics && x.columns.iter().any(|c| matches!(c, FeatureColumn::Categorical { .. })) {
            let (e, m) = TargetEncoder::fit(x, &targets, k, seed);
            (Some(e), m)
        } else {
            (None, x.clone())
        };
        let prep = match params.max_bins {
            Some(b) => Prepared::histogram(&x, b),
            None => Prepared::exact(&x),
        };
        let mean: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|r| targets[r * k + j]).sum::<f64>() / n as f64)
            .collect();
        let init: Vec<f64> = match task {
            Task::Regression => mean,
            Task::Binary => vec![logit(mean[0])],
            Task::Multiclass => mean.iter().map(|p| p.clamp(1e-6, 1.0).ln()).collect(),
        };
        let lambda = if task == Task::Regression { 0.0 } else { 1.0 };
        let mut raw: Vec<f64> = init.repeat(n);
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut train_loss = Vec::with_capacity(params.n_trees);
        let mut r = vec![0.0; n * k];
        let mut h = vec![0.0; n * k];
        let opts = GrowOptions {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
        };
        for _ in 0..params.n_trees {
            residuals(task, k, &raw, &targets, &mut r, &mut h);
            let stats = Stats { k, r: &r, h: &h, lambda };
            let tree = grow_greedy(&x, &prep, &stats, (0..n).collect(), opts);
            for row in 0..n {
                for (o, v) in raw[row * k..(row + 1) * k].iter_mut().zip(tree.leaf_for(&x, row)) {
                    *o += params.learning_rate * v;
                }
            }
            train_loss.push(loss(task, k, &raw, &targets));
            trees.push(tree);
        }
        Ok(GbmModel {
            preset,
            params,
            task,
            k,
            init,
            trees,
            encoder,
            train_loss,
        })
    }

    pub fn raw_scores(&self, x: &FeatureMatrix) -> Vec<f64> {
        let encoded;
        let x = match &self.encoder {
            Some(e) => {
                encoded = e.apply(x);
                &encoded
            }
            None => x,
        };
        let k = self.k;
        let mut raw = self.init.repeat(x.n_rows);
        for tree in &self.trees {
            for row in 0..x.n_rows {
                for (o, v) in raw[row * k..(row + 1) * k].iter_mut().zip(tree.leaf_for(x, row)) {
                    *o += self.params.learning_rate * v;
                }
            }
        }
        raw
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        let raw = self.raw_scores(x);
        match self.task {
            Task::Regression => raw,
            Task::Binary => raw
                .iter()
                .flat_map(|&z| {
                    let p = sigmoid(z);
                    [1.0 - p, p]
                })
                .collect(),
            Task::Multiclass => softmax_rows(&raw, self.k),
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn residuals(task: Task, k: usize, raw: &[f64], t: &[f64], r: &mut [f64], h: &mut [f64]) {
    match task {
        Task::Regression => {
            for i in 0..raw.len() {
                r[i] = t[i] - raw[i];
                h[i] = 1.0;
            }
        }
        Task::Binary => {
            for i in 0..raw.len() {
                let p = sigmoid(raw[i]);
                r[i] = t[i] - p;
                h[i] = (p * (1.0 - p)).max(1e-12);
            }
        }
        Task::Multiclass => {
            let p = softmax_rows(raw, k);
            for i in 0..raw.len() {
                r[i] = t[i] - p[i];
                h[i] = (p[i] * (1.0 - p[i])).max(1e-12);
            }
        }
    }
}

fn loss(task: Task, k: usize, raw: &[f64], t: &[f64]) -> f64 {
    let n = (raw.len() / k) as f64;
    match task {
        Task::Regression => raw.iter().zip(t).map(|(f, y)| (y - f).powi(2)).sum::<f64>() / n,
        Task::Binary => {
            raw.iter()
                .zip(t)
                .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
                .sum::<f64>()
                / n
        }
        Task::Multiclass => {
            let p = softmax_rows(raw, k);
            -p.iter()
                .zip(t)
                .filter(|(_, y)| **y > 0.0)
                .map(|(p, _)| p.max(1e-300).ln())
                .sum::<f64>()
                / n
        }
    }
}
