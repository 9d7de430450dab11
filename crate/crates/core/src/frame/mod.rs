//! Column-typed data tables, modality inference, preprocessing and
//! train/validation splitting.

mod csv_io;
mod schema;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::Target;

pub use csv_io::{read_csv, read_type_overrides, write_csv};
pub use schema::{
    fit_transform, infer_schema, CategoricalColumn, EncodedTable, FeatureSchema, NumericColumn,
    NumericStats, TextColumn, DEFAULT_CATEGORICAL_THRESHOLD, UNKNOWN_CATEGORY,
};
pub use split::{split_indices, split_train_val, SplitSpec};

/// A single table cell. Numeric payloads are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Numeric(f64),
    Categorical(String),
    Text(String),
    Missing,
}

impl Cell {
    /// Builds a numeric cell, mapping NaN and infinities to `Missing`.
    pub fn numeric(value: f64) -> Cell {
        if value.is_finite() {
            Cell::Numeric(value)
        } else {
            Cell::Missing
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Raw string rendering; `None` for missing cells.
    pub fn as_string(&self) -> Option<String> {
        match self {
            Cell::Numeric(v) => Some(format_number(*v)),
            Cell::Categorical(s) | Cell::Text(s) => Some(s.clone()),
            Cell::Missing => None,
        }
    }

    /// Numeric view of the cell. Strings are parsed; failures yield `None`.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Numeric(v) => Some(*v),
            Cell::Categorical(s) | Cell::Text(s) => parse_number(s),
            Cell::Missing => None,
        }
    }
}

/// Shortest round-tripping decimal rendering; integral values drop the
/// fractional part.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        return None;
    }
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Numeric,
    Categorical,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Regression,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub cells: Vec<Cell>,
}

impl Column {
    pub fn new(name: impl Into<String>, cells: Vec<Cell>) -> Self {
        Column {
            name: name.into(),
            cells,
        }
    }
}

/// Ordered collection of equally long, uniquely named columns with an
/// optional prediction target.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    name: String,
    columns: Vec<Column>,
    n_rows: usize,
    target: Option<String>,
    task: Task,
    classes: Vec<String>,
    hints: BTreeMap<String, Modality>,
}

impl DataTable {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map(|c| c.cells.len()).unwrap_or(0);
        let mut seen = HashSet::new();
        for col in &columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", col.name)));
            }
            if col.cells.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column {:?} has {} cells, expected {}",
                    col.name,
                    col.cells.len(),
                    n_rows
                )));
            }
        }
        Ok(DataTable {
            name: name.into(),
            columns,
            n_rows,
            target: None,
            task: Task::Regression,
            classes: Vec::new(),
            hints: BTreeMap::new(),
        })
    }

    /// Marks `column` as the prediction target. For classification tasks the
    /// class list is fixed here (sorted distinct labels) and carried by every
    /// table derived from this one, so fold subsets keep a stable output width.
    pub fn with_target(mut self, column: &str, task: Task) -> Result<Self> {
        let idx = self
            .column_index(column)
            .ok_or_else(|| Error::ColumnNotFound(column.to_string()))?;
        let cells = &self.columns[idx].cells;
        if cells.iter().any(Cell::is_missing) {
            return Err(Error::Schema(format!("target column {column:?} has missing values")));
        }
        self.classes = Vec::new();
        match task {
            Task::Regression => {
                if let Some(bad) = cells.iter().find(|c| c.as_f64().is_none()) {
                    return Err(Error::Schema(format!(
                        "regression target {column:?} has non-numeric value {bad:?}"
                    )));
                }
            }
            Task::Binary | Task::Multiclass => {
                let distinct: BTreeSet<String> = cells.iter().filter_map(Cell::as_string).collect();
                if task == Task::Binary && distinct.len() != 2 {
                    return Err(Error::Schema(format!(
                        "binary target {column:?} has {} classes",
                        distinct.len()
                    )));
                }
                if distinct.len() < 2 {
                    return Err(Error::Schema(format!("target {column:?} has fewer than 2 classes")));
                }
                self.classes = distinct.into_iter().collect();
            }
        }
        self.target = Some(column.to_string());
        self.task = task;
        Ok(self)
    }

    /// Overrides the class list (e.g. to align a test table with training).
    pub fn with_classes(mut self, classes: Vec<String>) -> Self {
        self.classes = classes;
        self
    }

    pub fn with_hints(mut self, hints: BTreeMap<String, Modality>) -> Self {
        self.hints = hints;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Modality overrides supplied at ingestion; they bypass inference.
    pub fn hints(&self) -> &BTreeMap<String, Modality> {
        &self.hints
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        self.column(column).and_then(|c| c.cells.get(row))
    }

    /// Columns other than the target, in table order.
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        let target = self.target.clone();
        self.columns
            .iter()
            .filter(move |c| Some(&c.name) != target.as_ref())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_columns().map(|c| c.name.clone()).collect()
    }

    /// New table holding `rows` (in the given order); metadata preserved.
    pub fn take_rows(&self, rows: &[usize]) -> DataTable {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                cells: rows.iter().map(|&r| c.cells[r].clone()).collect(),
            })
            .collect();
        DataTable {
            name: self.name.clone(),
            columns,
            n_rows: rows.len(),
            target: self.target.clone(),
            task: self.task,
            classes: self.classes.clone(),
            hints: self.hints.clone(),
        }
    }

    /// Replaces the cells of an existing column.
    pub fn replace_column(&mut self, name: &str, cells: Vec<Cell>) -> Result<()> {
        if cells.len() != self.n_rows {
            return Err(Error::InvalidArgument(format!(
                "replacement for {name:?} has {} cells, expected {}",
                cells.len(),
                self.n_rows
            )));
        }
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))?;
        self.columns[idx].cells = cells;
        Ok(())
    }

    /// Rebuilds the table with a new column list, keeping target metadata.
    /// The target column must survive.
    pub fn with_columns(&self, columns: Vec<Column>, hints: BTreeMap<String, Modality>) -> Result<DataTable> {
        let mut table = DataTable::new(self.name.clone(), columns)?;
        if self.n_rows != table.n_rows && !table.columns.is_empty() {
            return Err(Error::Schema("row count changed while rebuilding table".into()));
        }
        table.n_rows = self.n_rows;
        if let Some(target) = &self.target {
            if table.column_index(target).is_none() {
                return Err(Error::Schema(format!("target column {target:?} dropped")));
            }
        }
        table.target = self.target.clone();
        table.task = self.task;
        table.classes = self.classes.clone();
        table.hints = hints;
        Ok(table)
    }

    /// Encoded labels of the target column.
    pub fn target_values(&self) -> Result<Target> {
        let name = self
            .target
            .as_deref()
            .ok_or_else(|| Error::Schema("table has no target column".into()))?;
        let cells = &self.column(name).expect("target column exists").cells;
        match self.task {
            Task::Regression => {
                let values = cells
                    .iter()
                    .map(|c| {
                        c.as_f64()
                            .ok_or_else(|| Error::Schema(format!("non-numeric regression target {c:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Target::Values(values))
            }
            Task::Binary | Task::Multiclass => {
                let labels = cells
                    .iter()
                    .map(|c| {
                        let s = c
                            .as_string()
                            .ok_or_else(|| Error::Schema("missing target label".into()))?;
                        self.classes
                            .binary_search(&s)
                            .map_err(|_| Error::Schema(format!("label {s:?} not in class list")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Target::Classes {
                    labels,
                    n_classes: self.classes.len(),
                })
            }
        }
    }
}
