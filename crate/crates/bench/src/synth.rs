//! Synthetic multimodal tables with a controlled split of label signal
//! between text, tabular columns and a text × numeric interaction.
//!
//! Every row gets a latent score
//!
//! ```text
//! z = a_text * T + a_tab * U + a_inter * I + jitter
//! ```
//!
//! where `T` is carried by a graded sentiment keyword hidden among filler
//! words, `U` is a linear function of the numeric and categorical columns
//! and `I = XOR(flag keyword present, num_0 > 0)` in ±1 form. Each component
//! has unit variance. Classification labels are equal-frequency cuts of `z`,
//! so classes are balanced exactly before noise; noise permutes the labels
//! of a random subset of rows, which keeps the class counts intact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tabtext::frame::{split_indices, write_csv};
use tabtext::rng;
use tabtext::{Cell, Column, DataTable, Modality, SplitSpec, Task};

use crate::config::DatasetConfig;

/// Graded sentiment keywords and their latent values (unit variance).
const GRADES: [(&str, f64); 4] = [("awful", -1.5), ("poor", -0.5), ("good", 0.5), ("excellent", 1.5)];
const GRADE_STD: f64 = 1.118_033_988_749_895; // sqrt(1.25)

/// Keyword whose presence flips the sign of the interaction term.
pub const FLAG_KEYWORD: &str = "urgent";

const FILLER: [&str; 32] = [
    "the", "a", "item", "was", "shipped", "today", "box", "blue", "with", "and", "order", "arrived", "late",
    "small", "large", "from", "store", "we", "bought", "it", "for", "home", "red", "green", "paper", "metal",
    "wood", "kit", "set", "new", "old", "pack",
];

const CATEGORY_LEVELS: usize = 5;

/// Share of the label signal carried by each source; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub text: f64,
    pub tabular: f64,
    pub interaction: f64,
}

impl Allocation {
    pub fn new(text: f64, tabular: f64, interaction: f64) -> Self {
        Allocation {
            text,
            tabular,
            interaction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_rows: usize,
    pub n_numeric: usize,
    pub n_categorical: usize,
    pub n_text_fields: usize,
    pub signal_allocation: Allocation,
    /// Share of rows whose label is replaced by a random draw, in [0, 1].
    pub noise: f64,
    pub task: Task,
    /// Used by multiclass tasks; binary is always 2.
    pub n_classes: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            n_rows: 2000,
            n_numeric: 3,
            n_categorical: 2,
            n_text_fields: 1,
            signal_allocation: Allocation::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
            noise: 0.0,
            task: Task::Binary,
            n_classes: 3,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let a = self.signal_allocation;
        for (name, v) in [("text", a.text), ("tabular", a.tabular), ("interaction", a.interaction)] {
            if !(0.0..=1.0).contains(&v) {
                bail!("allocation {name} = {v} outside [0, 1]");
            }
        }
        let total = a.text + a.tabular + a.interaction;
        if (total - 1.0).abs() > 1e-9 {
            bail!("allocation fractions sum to {total}, expected 1");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            bail!("noise {} outside [0, 1]", self.noise);
        }
        if self.n_rows < 20 {
            bail!("n_rows must be at least 20");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1)");
        }
        if (a.text > 0.0 || a.interaction > 0.0) && self.n_text_fields == 0 {
            bail!("text or interaction signal needs at least one text field");
        }
        if a.interaction > 0.0 && self.n_numeric == 0 {
            bail!("interaction signal needs at least one numeric column");
        }
        if a.tabular > 0.0 && self.n_numeric + self.n_categorical == 0 {
            bail!("tabular signal needs numeric or categorical columns");
        }
        if self.task == Task::Multiclass && self.n_classes < 3 {
            bail!("multiclass needs n_classes >= 3");
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        match self.task {
            Task::Binary => 2,
            Task::Multiclass => self.n_classes,
            Task::Regression => 0,
        }
    }

    pub fn target_name(&self) -> &'static str {
        "label"
    }

    /// Modality hints for every feature column.
    pub fn hints(&self) -> BTreeMap<String, Modality> {
        let mut h = BTreeMap::new();
        for j in 0..self.n_numeric {
            h.insert(format!("num_{j}"), Modality::Numeric);
        }
        for j in 0..self.n_categorical {
            h.insert(format!("cat_{j}"), Modality::Categorical);
        }
        for j in 0..self.n_text_fields {
            h.insert(format!("text_{j}"), Modality::Text);
        }
        h
    }
}

fn class_label(c: usize) -> String {
    format!("class_{c}")
}

/// Generates the full table, then splits it into (train, test) with a
/// stratified split. Deterministic given the spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(DataTable, DataTable)> {
    spec.validate()?;
    let n = spec.n_rows;
    let mut r = rng::seeded(spec.seed);
    let a = spec.signal_allocation;

    let num_weights: Vec<f64> = (0..spec.n_numeric)
        .map(|_| {
            let w: f64 = r.random_range(0.5..1.5);
            if r.random_bool(0.5) {
                w
            } else {
                -w
            }
        })
        .collect();
    let cat_effects: Vec<Vec<f64>> = (0..spec.n_categorical)
        .map(|_| (0..CATEGORY_LEVELS).map(|_| r.random_range(-1.5..1.5)).collect())
        .collect();

    let mut numeric = vec![vec![0.0; n]; spec.n_numeric];
    let mut categorical = vec![vec![0usize; n]; spec.n_categorical];
    let mut texts = vec![vec![String::new(); n]; spec.n_text_fields];
    // Grades and (flag, sign of num_0) pairs come from balanced pools so
    // the discrete components split evenly at the median.
    let grades = balanced_pool(n, GRADES.len(), &mut r);
    let combos = balanced_pool(n, 4, &mut r);
    let mut t_part = vec![0.0; n];
    let mut u_part = vec![0.0; n];
    let mut i_part = vec![0.0; n];

    for row in 0..n {
        let flagged = combos[row] & 1 == 1;
        let positive = combos[row] & 2 == 2;
        for (j, col) in numeric.iter_mut().enumerate() {
            let v: f64 = r.sample(StandardNormal);
            col[row] = if j == 0 { if positive { v.abs() } else { -v.abs() } } else { v };
            u_part[row] += num_weights[j] * col[row];
        }
        for (j, col) in categorical.iter_mut().enumerate() {
            col[row] = r.random_range(0..CATEGORY_LEVELS);
            u_part[row] += cat_effects[j][col[row]];
        }

        let mut fields: Vec<Vec<&str>> = (0..spec.n_text_fields)
            .map(|_| (0..r.random_range(5..12)).map(|_| FILLER[r.random_range(0..FILLER.len())]).collect())
            .collect();
        if spec.n_text_fields > 0 {
            let (word, value) = GRADES[grades[row]];
            t_part[row] = value / GRADE_STD;
            insert_word(&mut fields, word, &mut r);
            if flagged {
                insert_word(&mut fields, FLAG_KEYWORD, &mut r);
            }
            if spec.n_numeric > 0 {
                i_part[row] = if flagged != positive { 1.0 } else { -1.0 };
            }
        }
        for (j, words) in fields.into_iter().enumerate() {
            texts[j][row] = words.join(" ");
        }
    }
    standardize(&mut u_part);

    let z: Vec<f64> = (0..n)
        .map(|i| {
            let jitter: f64 = r.sample(StandardNormal);
            a.text * t_part[i] + a.tabular * u_part[i] + a.interaction * i_part[i] + 1e-6 * jitter
        })
        .collect();

    let target = match spec.task {
        Task::Regression => {
            let mut y = z.clone();
            standardize(&mut y);
            for v in &mut y {
                let e: f64 = r.sample(StandardNormal);
                *v = (1.0 - spec.noise) * *v + spec.noise * e;
            }
            y.into_iter().map(Cell::Numeric).collect::<Vec<_>>()
        }
        Task::Binary | Task::Multiclass => {
            let labels = noisy_labels(equal_frequency_labels(&z, spec.classes()), spec.noise, &mut r);
            labels.into_iter().map(|c| Cell::Categorical(class_label(c))).collect()
        }
    };

    let mut columns = Vec::new();
    for (j, col) in numeric.into_iter().enumerate() {
        columns.push(Column::new(format!("num_{j}"), col.into_iter().map(Cell::Numeric).collect()));
    }
    for (j, col) in categorical.into_iter().enumerate() {
        columns.push(Column::new(
            format!("cat_{j}"),
            col.into_iter().map(|c| Cell::Categorical(format!("lvl{c}"))).collect(),
        ));
    }
    for (j, col) in texts.into_iter().enumerate() {
        columns.push(Column::new(format!("text_{j}"), col.into_iter().map(Cell::Text).collect()));
    }
    columns.push(Column::new(spec.target_name(), target));

    let table = DataTable::new(spec.name.clone(), columns)?
        .with_hints(spec.hints())
        .with_target(spec.target_name(), spec.task)?;
    let split = SplitSpec::new(spec.test_fraction, rng::derive_seed(spec.seed, 1), true);
    let (train_rows, test_rows) = split_indices(&table, &split)?;
    Ok((table.take_rows(&train_rows), table.take_rows(&test_rows)))
}

fn insert_word<'a>(fields: &mut [Vec<&'a str>], word: &'a str, r: &mut rng::Rng) {
    let f = r.random_range(0..fields.len());
    let at = r.random_range(0..=fields[f].len());
    fields[f].insert(at, word);
}

fn balanced_pool(n: usize, k: usize, r: &mut rng::Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).map(|i| i % k).collect();
    pool.shuffle(r);
    pool
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

/// Class `c` holds the rows whose rank in `z` falls in the c-th of
/// `classes` equal slices.
fn equal_frequency_labels(z: &[f64], classes: usize) -> Vec<usize> {
    let n = z.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| z[i].total_cmp(&z[j]).then(i.cmp(&j)));
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank * classes / n;
    }
    labels
}

/// Shuffles the labels of a random `noise` share of rows among themselves.
fn noisy_labels(mut labels: Vec<usize>, noise: f64, r: &mut rng::Rng) -> Vec<usize> {
    let m = (noise * labels.len() as f64).round() as usize;
    if m == 0 {
        return labels;
    }
    let mut rows: Vec<usize> = (0..labels.len()).collect();
    rows.shuffle(r);
    rows.truncate(m);
    let mut pool: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
    pool.shuffle(r);
    for (&i, c) in rows.iter().zip(pool) {
        labels[i] = c;
    }
    labels
}

/// Writes `train.csv`, `test.csv`, `types.json` and a ready-to-use
/// `dataset.json` entry for run configs into `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<()> {
    let (train, test) = gen_synthetic(spec)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&train, dir.join("train.csv"))?;
    write_csv(&test, dir.join("test.csv"))?;
    fs::write(dir.join("types.json"), serde_json::to_string_pretty(&spec.hints())?)?;
    let dataset = DatasetConfig {
        name: spec.name.clone(),
        path: "train.csv".into(),
        test_path: Some("test.csv".into()),
        target: spec.target_name().into(),
        task: spec.task,
        metric: None,
        type_overrides: spec.hints(),
        test_fraction: None,
    };
    fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&dataset)?)?;
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)?)?;
    Ok(())
}
