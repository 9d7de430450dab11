//! Model outputs and encoded labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Task;

/// Encoded labels: class indices for classification, values for regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn take(&self, rows: &[usize]) -> Target {
        match self {
            Target::Classes { labels, n_classes } => Target::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                n_classes: *n_classes,
            },
            Target::Values(v) => Target::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Target::Classes { labels, .. } => Some(labels),
            Target::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Target::Values(v) => Some(v),
            Target::Classes { .. } => None,
        }
    }
}

/// Row-major per-row model outputs: one value per row for regression, a
/// class-probability vector for classification (binary tasks carry both
/// columns, `[1 - p, p]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    task: Task,
    n_rows: usize,
    width: usize,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(task: Task, width: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || values.len() % width != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {width}",
                values.len()
            )));
        }
        if task == Task::Regression && width != 1 {
            return Err(Error::InvalidArgument("regression predictions have width 1".into()));
        }
        Ok(PredictionMatrix {
            task,
            n_rows: values.len() / width,
            width,
            values,
        })
    }

    pub fn regression(values: Vec<f64>) -> Self {
        PredictionMatrix {
            task: Task::Regression,
            n_rows: values.len(),
            width: 1,
            values,
        }
    }

    /// Binary predictions from positive-class probabilities.
    pub fn binary(positive: &[f64]) -> Self {
        let values = positive.iter().flat_map(|&p| [1.0 - p, p]).collect();
        PredictionMatrix {
            task: Task::Binary,
            n_rows: positive.len(),
            width: 2,
            values,
        }
    }

    pub fn empty(task: Task, width: usize) -> Self {
        PredictionMatrix {
            task,
            n_rows: 0,
            width,
            values: Vec::new(),
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.width)
    }

    pub fn argmax(&self, row: usize) -> usize {
        let r = self.row(row);
        let mut best = 0;
        for (j, &v) in r.iter().enumerate() {
            if v > r[best] {
                best = j;
            }
        }
        best
    }

    /// Scores used for ranking in binary tasks: the positive-class column,
    /// or the single column of a width-1 matrix.
    pub fn positive_scores(&self) -> Vec<f64> {
        let col = if self.width >= 2 { 1 } else { 0 };
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    pub fn take_rows(&self, rows: &[usize]) -> PredictionMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        PredictionMatrix {
            task: self.task,
            n_rows: rows.len(),
            width: self.width,
            values,
        }
    }

    /// Scatters `part` (predictions for `rows`) into this matrix.
    pub fn scatter_rows(&mut self, rows: &[usize], part: &PredictionMatrix) {
        for (i, &r) in rows.iter().enumerate() {
            let w = self.width;
            self.values[r * w..(r + 1) * w].copy_from_slice(part.row(i));
        }
    }

    pub fn zeros(task: Task, n_rows: usize, width: usize) -> Self {
        PredictionMatrix {
            task,
            n_rows,
            width,
            values: vec![0.0; n_rows * width],
        }
    }

    /// Convex (or arbitrary linear) combination of equally shaped matrices.
    pub fn weighted_sum(parts: &[(&PredictionMatrix, f64)]) -> Result<PredictionMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("weighted sum of zero matrices".into()))?
            .0;
        let mut out = PredictionMatrix::zeros(first.task, first.n_rows, first.width);
        for (m, w) in parts {
            if m.n_rows != first.n_rows || m.width != first.width {
                return Err(Error::InvalidArgument("prediction matrices differ in shape".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}
