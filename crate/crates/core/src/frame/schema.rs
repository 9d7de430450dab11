use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{parse_number, Cell, DataTable, Modality};
use crate::error::{Error, Result};

/// Distinct-value threshold separating categorical from text string columns.
pub const DEFAULT_CATEGORICAL_THRESHOLD: usize = 20;

/// Reserved category standing in for missing and unseen values.
pub const UNKNOWN_CATEGORY: &str = "<unknown>";

const NUMERIC_PARSE_SHARE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-column modality assignment plus the statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// Feature columns in table order with their modality.
    pub columns: Vec<(String, Modality)>,
    /// Category levels per categorical column; the last entry is always
    /// [`UNKNOWN_CATEGORY`].
    pub categorical_vocab: BTreeMap<String, Vec<String>>,
    pub numeric_stats: BTreeMap<String, NumericStats>,
    pub target: Option<String>,
    pub warnings: Vec<String>,
}

impl FeatureSchema {
    pub fn modality(&self, column: &str) -> Option<Modality> {
        self.columns.iter().find(|(n, _)| n == column).map(|(_, m)| *m)
    }

    pub fn columns_of(&self, modality: Modality) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, m)| *m == modality)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn unknown_index(&self, column: &str) -> Option<usize> {
        self.categorical_vocab.get(column).map(|v| v.len() - 1)
    }

    /// Vocabulary sizes (including the Unknown slot) of categorical columns,
    /// in column order.
    pub fn categorical_sizes(&self) -> Vec<usize> {
        self.columns_of(Modality::Categorical)
            .iter()
            .map(|c| self.categorical_vocab.get(c).map_or(1, Vec::len))
            .collect()
    }

    pub fn is_fitted(&self) -> bool {
        self.columns.iter().all(|(name, m)| match m {
            Modality::Numeric => self.numeric_stats.contains_key(name),
            Modality::Categorical => self.categorical_vocab.contains_key(name),
            Modality::Text => true,
        })
    }

    /// Fits numeric statistics and categorical vocabularies on `table`.
    pub fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.check_columns(table)?;
        self.numeric_stats.clear();
        self.categorical_vocab.clear();
        for (name, modality) in &self.columns {
            let cells = &table.column(name).expect("checked").cells;
            match modality {
                Modality::Numeric => {
                    let values: Vec<f64> = cells.iter().filter_map(Cell::as_f64).collect();
                    self.numeric_stats.insert(name.clone(), numeric_stats(&values));
                }
                Modality::Categorical => {
                    let mut levels: Vec<String> = cells
                        .iter()
                        .filter_map(Cell::as_string)
                        .filter(|s| s != UNKNOWN_CATEGORY)
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    levels.push(UNKNOWN_CATEGORY.to_string());
                    self.categorical_vocab.insert(name.clone(), levels);
                }
                Modality::Text => {}
            }
        }
        Ok(())
    }

    /// Applies the fitted preprocessing: numeric cells are imputed with the
    /// fit-time mean and then standardized, categorical cells become vocabulary
    /// indices (missing or unseen map to Unknown), missing text becomes "".
    pub fn transform(&self, table: &DataTable) -> Result<EncodedTable> {
        self.check_columns(table)?;
        if !self.is_fitted() {
            return Err(Error::Schema("schema statistics have not been fitted".into()));
        }
        let mut out = EncodedTable {
            n_rows: table.n_rows(),
            ..EncodedTable::default()
        };
        for (name, modality) in &self.columns {
            let cells = &table.column(name).expect("checked").cells;
            match modality {
                Modality::Numeric => {
                    let stats = self.numeric_stats[name];
                    let values = cells
                        .iter()
                        .map(|c| (c.as_f64().unwrap_or(stats.mean) - stats.mean) / stats.std)
                        .collect();
                    out.numeric.push(NumericColumn {
                        name: name.clone(),
                        values,
                    });
                }
                Modality::Categorical => {
                    let levels = &self.categorical_vocab[name];
                    let unknown = levels.len() - 1;
                    let known = &levels[..unknown];
                    let codes = cells
                        .iter()
                        .map(|c| {
                            c.as_string()
                                .and_then(|s| known.binary_search(&s).ok())
                                .unwrap_or(unknown)
                        })
                        .collect();
                    out.categorical.push(CategoricalColumn {
                        name: name.clone(),
                        codes,
                        n_levels: levels.len(),
                    });
                }
                Modality::Text => {
                    let values = cells.iter().map(|c| c.as_string().unwrap_or_default()).collect();
                    out.text.push(TextColumn {
                        name: name.clone(),
                        values,
                    });
                }
            }
        }
        Ok(out)
    }

    fn check_columns(&self, table: &DataTable) -> Result<()> {
        let expected: BTreeSet<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        let unknown: Vec<&str> = table
            .columns()
            .iter()
            .map(|c| c.name.as_str())
            .filter(|n| Some(*n) != self.target.as_deref() && Some(*n) != table.target())
            .filter(|n| !expected.contains(n))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::SchemaMismatch(format!("columns not in schema: {unknown:?}")));
        }
        let missing: Vec<&str> = expected
            .iter()
            .copied()
            .filter(|n| table.column(n).is_none())
            .collect();
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch(format!("schema columns absent from table: {missing:?}")));
        }
        Ok(())
    }
}

fn numeric_stats(values: &[f64]) -> NumericStats {
    if values.is_empty() {
        return NumericStats { mean: 0.0, std: 1.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    NumericStats {
        mean,
        std: if std > 0.0 { std } else { 1.0 },
    }
}

/// Assigns a modality to every non-target column and fits its statistics.
///
/// Numeric columns (at least 99% of non-missing cells parse as numbers) are
/// numeric no matter how many distinct values they hold. String columns with
/// at most `categorical_threshold` distinct values are categorical, the rest
/// text. All-missing columns become categorical with only the Unknown level.
pub fn infer_schema(table: &DataTable, categorical_threshold: usize) -> Result<FeatureSchema> {
    if table.n_rows() == 0 {
        return Err(Error::InvalidArgument("cannot infer a schema from an empty table".into()));
    }
    let mut schema = FeatureSchema {
        columns: Vec::new(),
        categorical_vocab: BTreeMap::new(),
        numeric_stats: BTreeMap::new(),
        target: table.target().map(str::to_string),
        warnings: Vec::new(),
    };
    for col in table.feature_columns() {
        let modality = match table.hints().get(&col.name) {
            Some(m) => *m,
            None => infer_modality(&col.cells, categorical_threshold),
        };
        if col.cells.iter().all(Cell::is_missing) {
            schema
                .warnings
                .push(format!("column {:?} is entirely missing", col.name));
            schema.columns.push((col.name.clone(), Modality::Categorical));
            continue;
        }
        schema.columns.push((col.name.clone(), modality));
    }
    for w in &schema.warnings {
        log::warn!("{w}");
    }
    schema.fit(table)?;
    Ok(schema)
}

fn infer_modality(cells: &[Cell], threshold: usize) -> Modality {
    let present: Vec<&Cell> = cells.iter().filter(|c| !c.is_missing()).collect();
    if present.is_empty() {
        return Modality::Categorical;
    }
    let numeric = present
        .iter()
        .filter(|c| match c {
            Cell::Numeric(_) => true,
            Cell::Categorical(s) | Cell::Text(s) => parse_number(s).is_some(),
            Cell::Missing => false,
        })
        .count();
    if numeric as f64 >= NUMERIC_PARSE_SHARE * present.len() as f64 {
        return Modality::Numeric;
    }
    let mut distinct = BTreeSet::new();
    for c in &present {
        if let Some(s) = c.as_string() {
            distinct.insert(s);
            if distinct.len() > threshold {
                return Modality::Text;
            }
        }
    }
    Modality::Categorical
}

/// Fits the schema statistics on `table` when `fit` is set, then transforms.
pub fn fit_transform(schema: &mut FeatureSchema, table: &DataTable, fit: bool) -> Result<EncodedTable> {
    if fit {
        schema.fit(table)?;
    }
    schema.transform(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub codes: Vec<usize>,
    pub n_levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// Preprocessed feature columns grouped by modality, each group in table
/// column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedTable {
    pub n_rows: usize,
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
    pub text: Vec<TextColumn>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Column;
    use proptest::prelude::*;

    fn num(v: &[Option<f64>]) -> Vec<Cell> {
        v.iter().map(|x| x.map(Cell::Numeric).unwrap_or(Cell::Missing)).collect()
    }

    fn strings(n_distinct: usize, n_rows: usize) -> Vec<Cell> {
        (0..n_rows).map(|i| Cell::Text(format!("v{}", i % n_distinct))).collect()
    }

    #[test]
    fn threshold_boundary() {
        let t = DataTable::new(
            "t",
            vec![
                Column::new("twenty", strings(20, 1000)),
                Column::new("twentyone", strings(21, 1000)),
                Column::new("float", (0..1000).map(|i| Cell::Numeric(i as f64 * 0.5)).collect()),
            ],
        )
        .unwrap();
        let s = infer_schema(&t, DEFAULT_CATEGORICAL_THRESHOLD).unwrap();
        assert_eq!(s.modality("twenty"), Some(Modality::Categorical));
        assert_eq!(s.modality("twentyone"), Some(Modality::Text));
        assert_eq!(s.modality("float"), Some(Modality::Numeric));
        assert_eq!(s.categorical_vocab["twenty"].len(), 21);
        assert_eq!(s.categorical_vocab["twenty"].last().unwrap(), UNKNOWN_CATEGORY);
    }

    #[test]
    fn all_missing_column_is_flagged() {
        let t = DataTable::new("t", vec![Column::new("empty", vec![Cell::Missing; 3])]).unwrap();
        let s = infer_schema(&t, 20).unwrap();
        assert_eq!(s.modality("empty"), Some(Modality::Categorical));
        assert_eq!(s.categorical_vocab["empty"], vec![UNKNOWN_CATEGORY.to_string()]);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn target_is_excluded() {
        let t = DataTable::new(
            "t",
            vec![
                Column::new("x", num(&[Some(1.0), Some(2.0)])),
                Column::new("y", vec![Cell::Text("a".into()), Cell::Text("b".into())]),
            ],
        )
        .unwrap()
        .with_target("y", crate::frame::Task::Binary)
        .unwrap();
        let s = infer_schema(&t, 20).unwrap();
        assert_eq!(s.columns, vec![("x".to_string(), Modality::Numeric)]);
    }

    #[test]
    fn standardizes_with_population_std() {
        let t = DataTable::new("t", vec![Column::new("a", num(&[Some(1.0), Some(2.0), Some(3.0)]))]).unwrap();
        let mut s = infer_schema(&t, 20).unwrap();
        let e = fit_transform(&mut s, &t, true).unwrap();
        let sigma = (2.0f64 / 3.0).sqrt();
        let expected = [-1.0 / sigma, 0.0, 1.0 / sigma];
        for (got, want) in e.numeric[0].values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((expected[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn imputed_value_lands_at_zero() {
        let t = DataTable::new("t", vec![Column::new("a", num(&[Some(1.0), None, Some(3.0)]))]).unwrap();
        let s = infer_schema(&t, 20).unwrap();
        assert_eq!(s.numeric_stats["a"].mean, 2.0);
        let e = s.transform(&t).unwrap();
        assert_eq!(e.numeric[0].values[1], 0.0);
    }

    #[test]
    fn constant_column_uses_unit_std() {
        let t = DataTable::new("t", vec![Column::new("a", num(&[Some(4.0), Some(4.0)]))]).unwrap();
        let s = infer_schema(&t, 20).unwrap();
        assert_eq!(s.numeric_stats["a"].std, 1.0);
        assert_eq!(s.transform(&t).unwrap().numeric[0].values, vec![0.0, 0.0]);
    }

    #[test]
    fn unseen_category_maps_to_unknown() {
        let cat = |v: &str| Cell::Categorical(v.to_string());
        let train = DataTable::new("t", vec![Column::new("c", vec![cat("US"), cat("GB"), cat("US")])]).unwrap();
        let s = infer_schema(&train, 20).unwrap();
        assert_eq!(s.categorical_vocab["c"], vec!["GB", "US", UNKNOWN_CATEGORY]);
        let test = DataTable::new("t", vec![Column::new("c", vec![cat("NZ"), Cell::Missing, cat("US")])]).unwrap();
        let e = s.transform(&test).unwrap();
        assert_eq!(e.categorical[0].codes, vec![2, 2, 1]);
        assert_eq!(e.categorical[0].n_levels, 3);
    }

    #[test]
    fn missing_text_becomes_empty_string() {
        let mut cells = strings(50, 50);
        cells[3] = Cell::Missing;
        let t = DataTable::new("t", vec![Column::new("txt", cells)]).unwrap();
        let e = infer_schema(&t, 20).unwrap().transform(&t).unwrap();
        assert_eq!(e.text[0].values[3], "");
    }

    #[test]
    fn unknown_column_at_transform_time_is_mismatch() {
        let t = DataTable::new("t", vec![Column::new("a", num(&[Some(1.0)]))]).unwrap();
        let s = infer_schema(&t, 20).unwrap();
        let other = DataTable::new(
            "t",
            vec![Column::new("a", num(&[Some(1.0)])), Column::new("b", num(&[Some(1.0)]))],
        )
        .unwrap();
        assert!(matches!(s.transform(&other), Err(Error::SchemaMismatch(_))));
        let mut unfitted = s.clone();
        unfitted.numeric_stats.clear();
        assert!(matches!(fit_transform(&mut unfitted, &t, false), Err(Error::Schema(_))));
    }

    fn arb_cell() -> impl Strategy<Value = Cell> {
        prop_oneof![
            Just(Cell::Missing),
            (-1e6f64..1e6).prop_map(Cell::Numeric),
            "[a-z]{1,3}".prop_map(Cell::Text),
            "[0-9]{1,2}".prop_map(Cell::Text),
        ]
    }

    fn arb_table() -> impl Strategy<Value = DataTable> {
        (1usize..30, 1usize..6).prop_flat_map(|(rows, cols)| {
            proptest::collection::vec(
                prop_oneof![
                    proptest::collection::vec(arb_cell(), rows),
                    proptest::collection::vec(
                        prop_oneof![Just(Cell::Missing), (-1e3f64..1e3).prop_map(Cell::Numeric)],
                        rows
                    ),
                ],
                cols,
            )
            .prop_map(|cols| {
                let columns = cols
                    .into_iter()
                    .enumerate()
                    .map(|(i, cells)| Column::new(format!("c{i}"), cells))
                    .collect();
                DataTable::new("fuzz", columns).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn one_modality_per_column_and_numeric_stable(table in arb_table()) {
            let s20 = infer_schema(&table, 20).unwrap();
            let sinf = infer_schema(&table, usize::MAX).unwrap();
            prop_assert_eq!(s20.columns.len(), table.columns().len());
            for (name, m) in &s20.columns {
                prop_assert_eq!(table.columns().iter().filter(|c| &c.name == name).count(), 1);
                if *m == Modality::Numeric {
                    prop_assert_eq!(sinf.modality(name), Some(Modality::Numeric));
                }
            }
            for levels in s20.categorical_vocab.values() {
                prop_assert_eq!(levels.iter().filter(|l| *l == UNKNOWN_CATEGORY).count(), 1);
                prop_assert_eq!(levels.last().map(String::as_str), Some(UNKNOWN_CATEGORY));
            }
            for st in s20.numeric_stats.values() {
                prop_assert!(st.std > 0.0);
            }
        }

        #[test]
        fn transform_is_repeatable(table in arb_table()) {
            let s = infer_schema(&table, 20).unwrap();
            let a = s.transform(&table).unwrap();
            let b = s.transform(&table.clone()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn standardized_columns_are_centered(values in proptest::collection::vec(-1e3f64..1e3, 2..60)) {
            let t = DataTable::new("t", vec![Column::new("a", values.iter().map(|v| Cell::Numeric(*v)).collect())]).unwrap();
            let s = infer_schema(&t, 20).unwrap();
            let z = &s.transform(&t).unwrap().numeric[0].values;
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let raw_var = {
                let m = values.iter().sum::<f64>() / n;
                values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
            };
            if raw_var > 1e-12 {
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }
}
