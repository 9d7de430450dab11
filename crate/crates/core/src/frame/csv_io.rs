use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{format_number, parse_number, Cell, Column, DataTable, Modality};
use crate::error::{Error, Result};

/// Share of non-missing cells that must parse as numbers for a column to be
/// read as numeric.
const NUMERIC_PARSE_SHARE: f64 = 0.99;

/// Reads an RFC-4180 CSV file with a mandatory header row.
///
/// Empty fields become `Missing`. Columns in `type_overrides` are parsed
/// according to the given modality and keep it as an inference hint.
pub fn read_csv(path: impl AsRef<Path>, type_overrides: &BTreeMap<String, Modality>) -> Result<DataTable> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".to_string());
    let file = File::open(path)?;
    parse_csv(file, &name, type_overrides)
}

pub(crate) fn parse_csv<R: Read>(
    reader: R,
    name: &str,
    type_overrides: &BTreeMap<String, Modality>,
) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate header name {h:?}")));
        }
    }
    for key in type_overrides.keys() {
        if !seen.contains(key.as_str()) {
            return Err(Error::Schema(format!("type override for unknown column {key:?}")));
        }
    }

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line()).unwrap_or(i as u64 + 2),
            message: e.to_string(),
        })?;
        for (col, field) in record.iter().enumerate() {
            raw[col].push(if field.is_empty() { None } else { Some(field.to_string()) });
        }
    }

    let columns = headers
        .iter()
        .zip(raw)
        .map(|(name, values)| Column::new(name.clone(), parse_column(values, type_overrides.get(name))))
        .collect();
    Ok(DataTable::new(name, columns)?.with_hints(type_overrides.clone()))
}

fn parse_column(values: Vec<Option<String>>, modality: Option<&Modality>) -> Vec<Cell> {
    let numeric = match modality {
        Some(Modality::Numeric) => true,
        Some(_) => false,
        None => {
            let present = values.iter().flatten().count();
            let parsed = values.iter().flatten().filter(|s| parse_number(s).is_some()).count();
            present > 0 && parsed as f64 >= NUMERIC_PARSE_SHARE * present as f64
        }
    };
    values
        .into_iter()
        .map(|v| match v {
            None => Cell::Missing,
            Some(s) if numeric => parse_number(&s).map(Cell::Numeric).unwrap_or(Cell::Missing),
            Some(s) => match modality {
                Some(Modality::Categorical) => Cell::Categorical(s),
                _ => Cell::Text(s),
            },
        })
        .collect()
}

/// Reads a JSON object mapping column names to `"numeric"`, `"categorical"`
/// or `"text"`.
pub fn read_type_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<String, Modality>> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

/// Writes the table as CSV with a header row; missing cells are empty.
pub fn write_csv(table: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_csv_to(table, file)
}

pub(crate) fn write_csv_to<W: Write>(table: &DataTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(table.columns().iter().map(|c| c.name.as_str()))?;
    for row in 0..table.n_rows() {
        wtr.write_record(table.columns().iter().map(|c| match &c.cells[row] {
            Cell::Numeric(v) => format_number(*v),
            Cell::Categorical(s) | Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }))?;
    }
    wtr.flush()?;
    Ok(())
}
