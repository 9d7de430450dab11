//! Metrics, benchmark aggregation and permutation importance.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{DataTable, Task};
use crate::model::Model;
use crate::prediction::{PredictionMatrix, Target};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Auc,
    R2,
}

impl MetricKind {
    /// Default metric of a task: multiclass → accuracy, binary → AUC,
    /// regression → R².
    pub fn for_task(task: Task) -> MetricKind {
        match task {
            Task::Multiclass => MetricKind::Accuracy,
            Task::Binary => MetricKind::Auc,
            Task::Regression => MetricKind::R2,
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            MetricKind::Accuracy => task.is_classification(),
            MetricKind::Auc => task == Task::Binary,
            MetricKind::R2 => task == Task::Regression,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Auc => "auc",
            MetricKind::R2 => "r2",
        }
    }
}

/// Scores predictions against encoded labels; higher is better.
pub fn score(kind: MetricKind, preds: &PredictionMatrix, y: &Target) -> Result<f64> {
    if preds.n_rows() != y.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            preds.n_rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Metric("cannot score zero rows".into()));
    }
    match (kind, y) {
        (MetricKind::Accuracy, Target::Classes { labels, .. }) => {
            let argmax: Vec<usize> = (0..preds.n_rows()).map(|i| preds.argmax(i)).collect();
            Ok(accuracy(&argmax, labels))
        }
        (MetricKind::Auc, Target::Classes { labels, .. }) => auc(&preds.positive_scores(), labels),
        (MetricKind::R2, Target::Values(v)) => {
            if preds.width() != 1 {
                return Err(Error::Metric("r2 expects one prediction per row".into()));
            }
            r2(preds.values(), v)
        }
        _ => Err(Error::Metric(format!("metric {} does not match the label kind", kind.name()))),
    }
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Probability that a random positive (label 1) outscores a random negative
/// (label 0), ties counted as one half.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut twice_concordant) = (0u64, 0u64);
    let (mut n_pos, mut n_neg) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_concordant += pos * (2 * neg_below + neg);
        neg_below += neg;
        n_pos += pos;
        n_neg += neg;
        i = j;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both positive and negative labels".into()));
    }
    Ok(twice_concordant as f64 / (2 * n_pos * n_neg) as f64)
}

/// Coefficient of determination, `1 - SSres / SStot`.
pub fn r2(predicted: &[f64], y: &[f64]) -> Result<f64> {
    if predicted.len() != y.len() || y.is_empty() {
        return Err(Error::Metric("r2 needs aligned, non-empty inputs".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("r2 undefined for constant labels".into()));
    }
    let ss_res: f64 = predicted.iter().zip(y).map(|(p, v)| (v - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Scores of several methods over several datasets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkResult {
    methods: Vec<String>,
    datasets: Vec<String>,
    scores: HashMap<(String, String), f64>,
}

/// Per-method summary in method insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub methods: Vec<String>,
    pub avg: Vec<f64>,
    pub mrr: Vec<f64>,
}

impl BenchmarkResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, method: &str, dataset: &str, score: f64) {
        if !self.methods.iter().any(|m| m == method) {
            self.methods.push(method.to_string());
        }
        if !self.datasets.iter().any(|d| d == dataset) {
            self.datasets.push(dataset.to_string());
        }
        self.scores.insert((method.to_string(), dataset.to_string()), score);
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn get(&self, method: &str, dataset: &str) -> Option<f64> {
        self.scores.get(&(method.to_string(), dataset.to_string())).copied()
    }

    /// Rank of every method on `dataset` (1 = best, ties share the mean of
    /// their positions).
    pub fn ranks(&self, dataset: &str) -> Result<Vec<f64>> {
        let scores = self
            .methods
            .iter()
            .map(|m| self.get(m, dataset).ok_or_else(|| self.holes_error()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean_ranks(&scores))
    }

    fn holes(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for m in &self.methods {
            for d in &self.datasets {
                if self.get(m, d).is_none() {
                    out.push((m.clone(), d.clone()));
                }
            }
        }
        out
    }

    fn holes_error(&self) -> Error {
        let list: Vec<String> = self.holes().iter().map(|(m, d)| format!("{m}@{d}")).collect();
        Error::Metric(format!("missing scores: {}", list.join(", ")))
    }

    /// Average score and mean reciprocal rank per method.
    pub fn aggregate(&self) -> Result<Aggregate> {
        if !self.holes().is_empty() {
            return Err(self.holes_error());
        }
        let n = self.datasets.len().max(1) as f64;
        let mut avg = vec![0.0; self.methods.len()];
        let mut mrr = vec![0.0; self.methods.len()];
        for d in &self.datasets {
            let ranks = self.ranks(d)?;
            for (i, m) in self.methods.iter().enumerate() {
                avg[i] += self.get(m, d).expect("checked") / n;
                mrr[i] += 1.0 / ranks[i] / n;
            }
        }
        Ok(Aggregate {
            methods: self.methods.clone(),
            avg,
            mrr,
        })
    }

    /// Mean rank of each method across datasets.
    pub fn mean_rank(&self) -> Result<Vec<f64>> {
        let n = self.datasets.len().max(1) as f64;
        let mut out = vec![0.0; self.methods.len()];
        for d in &self.datasets {
            for (o, r) in out.iter_mut().zip(self.ranks(d)?) {
                *o += r / n;
            }
        }
        Ok(out)
    }

    /// Plain-text table: one row per method, one column per dataset, then
    /// avg and mrr.
    pub fn render_table(&self) -> Result<String> {
        let agg = self.aggregate()?;
        let name_w = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let col_w: Vec<usize> = self.datasets.iter().map(|d| d.len().max(7)).collect();
        let mut out = String::new();
        write!(out, "{:<name_w$}", "method").ok();
        for (d, w) in self.datasets.iter().zip(&col_w) {
            write!(out, "  {d:>w$}").ok();
        }
        writeln!(out, "  {:>7}  {:>7}", "avg", "mrr").ok();
        for (i, m) in self.methods.iter().enumerate() {
            write!(out, "{m:<name_w$}").ok();
            for (d, w) in self.datasets.iter().zip(&col_w) {
                write!(out, "  {:>w$.4}", self.get(m, d).expect("checked")).ok();
            }
            writeln!(out, "  {:>7.4}  {:>7.4}", agg.avg[i], agg.mrr[i]).ok();
        }
        Ok(out)
    }

    /// `method,dataset,score` rows in insertion order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["method", "dataset", "score"])?;
        for m in &self.methods {
            for d in &self.datasets {
                if let Some(s) = self.get(m, d) {
                    wtr.write_record([m.as_str(), d.as_str(), &s.to_string()])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Ranks in descending-score order with mean ranks for ties.
pub fn mean_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

/// Drop in `kind` score when the cells of `column` are shuffled across rows,
/// averaged over `repeats` seeded permutations.
pub fn permutation_importance(
    model: &dyn Model,
    test: &DataTable,
    column: &str,
    kind: MetricKind,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if test.column_index(column).is_none() {
        return Err(Error::ColumnNotFound(column.to_string()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let perms: Vec<Vec<usize>> = (0..repeats)
        .map(|r| {
            let mut rng = rng::seeded(rng::derive_seed(seed, r as u64));
            let mut p: Vec<usize> = (0..test.n_rows()).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    permutation_importance_with(model, test, column, kind, &perms)
}

/// Same as [`permutation_importance`] with caller-supplied permutations.
pub fn permutation_importance_with(
    model: &dyn Model,
    test: &DataTable,
    column: &str,
    kind: MetricKind,
    permutations: &[Vec<usize>],
) -> Result<f64> {
    let col = test
        .column(column)
        .ok_or_else(|| Error::ColumnNotFound(column.to_string()))?;
    if test.target() == Some(column) {
        return Err(Error::InvalidArgument("cannot permute the target column".into()));
    }
    if permutations.is_empty() {
        return Err(Error::InvalidArgument("no permutations given".into()));
    }
    let y = test.target_values()?;
    let base = score(kind, &model.predict(test)?, &y)?;
    let mut total = 0.0;
    for perm in permutations {
        if perm.len() != test.n_rows() {
            return Err(Error::InvalidArgument("permutation length differs from row count".into()));
        }
        let mut shuffled = test.clone();
        shuffled.replace_column(column, perm.iter().map(|&i| col.cells[i].clone()).collect())?;
        total += score(kind, &model.predict(&shuffled)?, &y)?;
    }
    Ok(base - total / permutations.len() as f64)
}

/// Importance of every feature column, keyed by name.
pub fn all_importances(
    model: &dyn Model,
    test: &DataTable,
    kind: MetricKind,
    repeats: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    test.feature_names()
        .into_iter()
        .map(|c| Ok((c.clone(), permutation_importance(model, test, &c, kind, repeats, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Cell, Column};

    #[test]
    fn auc_example() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(r2(&[1.0, 1.0], &[4.0, 4.0]).is_err());
    }

    #[test]
    fn score_dispatch() {
        let p = PredictionMatrix::binary(&[0.9, 0.2, 0.6]);
        let y = Target::Classes {
            labels: vec![1, 0, 0],
            n_classes: 2,
        };
        assert!((score(MetricKind::Accuracy, &p, &y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(score(MetricKind::Auc, &p, &y).unwrap(), 1.0);
        assert!(score(MetricKind::R2, &p, &y).is_err());
    }

    #[test]
    fn mrr_examples() {
        let mut b = BenchmarkResult::new();
        b.insert("solo", "d1", 0.3);
        b.insert("solo", "d2", 0.9);
        assert_eq!(b.aggregate().unwrap().mrr, vec![1.0]);

        let mut b = BenchmarkResult::new();
        b.insert("a", "d1", 0.9);
        b.insert("b", "d1", 0.8);
        b.insert("a", "d2", 0.1);
        b.insert("b", "d2", 0.2);
        b.insert("c", "d1", 0.8);
        b.insert("c", "d2", 0.0);
        let agg = b.aggregate().unwrap();
        assert_eq!(agg.mrr[0], 0.75);
        assert_eq!(b.ranks("d1").unwrap(), vec![1.0, 2.5, 2.5]);
    }

    #[test]
    fn missing_cell_is_reported() {
        let mut b = BenchmarkResult::new();
        b.insert("a", "d1", 0.9);
        b.insert("b", "d2", 0.8);
        let err = b.aggregate().unwrap_err().to_string();
        assert!(err.contains("a@d2") && err.contains("b@d1"), "{err}");
    }

    #[test]
    fn table_and_csv_render() {
        let mut b = BenchmarkResult::new();
        b.insert("a", "d1", 0.5);
        let t = b.render_table().unwrap();
        assert!(t.contains("avg") && t.contains("0.5000"));
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,dataset,score\na,d1,0.5\n");
    }

    struct Copy;
    impl Model for Copy {
        fn predict(&self, t: &DataTable) -> Result<PredictionMatrix> {
            Ok(PredictionMatrix::regression(
                t.column("x").unwrap().cells.iter().map(|c| c.as_f64().unwrap()).collect(),
            ))
        }
    }

    fn table() -> DataTable {
        let x: Vec<Cell> = (0..100).map(|i| Cell::Numeric(i as f64)).collect();
        let z: Vec<Cell> = (0..100).map(|i| Cell::Numeric((i % 7) as f64)).collect();
        DataTable::new("t", vec![Column::new("x", x.clone()), Column::new("z", z), Column::new("y", x)])
            .unwrap()
            .with_target("y", Task::Regression)
            .unwrap()
    }

    #[test]
    fn importance_behaviour() {
        let t = table();
        let ignored = permutation_importance(&Copy, &t, "z", MetricKind::R2, 5, 3).unwrap();
        assert_eq!(ignored, 0.0);
        let copied = permutation_importance(&Copy, &t, "x", MetricKind::R2, 5, 3).unwrap();
        assert!(copied > 0.9);
        let again = permutation_importance(&Copy, &t, "x", MetricKind::R2, 5, 3).unwrap();
        assert_eq!(copied.to_bits(), again.to_bits());
        let identity = vec![(0..100).collect::<Vec<usize>>()];
        assert_eq!(permutation_importance_with(&Copy, &t, "x", MetricKind::R2, &identity).unwrap(), 0.0);
        assert!(matches!(
            permutation_importance(&Copy, &t, "nope", MetricKind::R2, 5, 3),
            Err(Error::ColumnNotFound(_))
        ));
    }
}
