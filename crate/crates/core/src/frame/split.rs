use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DataTable;
use crate::error::{Error, Result};
use crate::prediction::Target;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl SplitSpec {
    pub fn new(validation_fraction: f64, seed: u64, stratify: bool) -> Self {
        SplitSpec {
            validation_fraction,
            seed,
            stratify,
        }
    }

    fn validate(&self, n_rows: usize) -> Result<()> {
        let f = self.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!("validation fraction {f} outside (0, 1)")));
        }
        if n_rows < 2 {
            return Err(Error::InvalidArgument("need at least 2 rows to split".into()));
        }
        Ok(())
    }
}

/// Splits `table` into (train, validation) row sets.
///
/// Classification tables are stratified when `spec.stratify` is set;
/// regression ignores the flag. Deterministic given the seed.
pub fn split_train_val(table: &DataTable, spec: &SplitSpec) -> Result<(DataTable, DataTable)> {
    let (train, val) = split_indices(table, spec)?;
    Ok((table.take_rows(&train), table.take_rows(&val)))
}

/// Row-index form of [`split_train_val`]; both lists are sorted ascending.
pub fn split_indices(table: &DataTable, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = table.n_rows();
    spec.validate(n)?;
    let mut rng = rng::seeded(spec.seed);
    let labels = match (spec.stratify, table.task().is_classification(), table.target()) {
        (true, true, Some(_)) => match table.target_values()? {
            Target::Classes { labels, .. } => Some(labels),
            Target::Values(_) => None,
        },
        _ => None,
    };

    let mut in_val = vec![false; n];
    match labels {
        None => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let n_val = clamp_val(round_half_even(n as f64 * spec.validation_fraction), n);
            for &r in &rows[..n_val] {
                in_val[r] = true;
            }
        }
        Some(labels) => stratified(&labels, spec.validation_fraction, &mut rng, &mut in_val),
    }

    let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| in_val[r]);
    Ok((train, val))
}

fn stratified(labels: &[usize], fraction: f64, rng: &mut rng::Rng, in_val: &mut [bool]) {
    // groups in order of first appearance
    let mut order: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for (row, &label) in labels.iter().enumerate() {
        let g = *slot.entry(label).or_insert_with(|| {
            order.push(label);
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }

    let mut pool = Vec::new();
    let mut strat: Vec<usize> = Vec::new();
    for (g, rows) in groups.iter().enumerate() {
        if rows.len() < 2 {
            log::warn!(
                "class {} has a single row; splitting it without stratification",
                order[g]
            );
            pool.extend_from_slice(rows);
        } else {
            strat.push(g);
        }
    }

    let strat_total: usize = strat.iter().map(|&g| groups[g].len()).sum();
    if strat_total > 0 {
        let target = round_half_even(strat_total as f64 * fraction);
        let quotas: Vec<f64> = strat.iter().map(|&g| groups[g].len() as f64 * fraction).collect();
        let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = alloc.iter().sum();
        let mut by_remainder: Vec<usize> = (0..strat.len()).collect();
        // stable sort keeps first-appearance order among equal remainders
        by_remainder.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &i in by_remainder.iter().take(target.saturating_sub(assigned)) {
            alloc[i] += 1;
        }
        for (i, &g) in strat.iter().enumerate() {
            let mut rows = groups[g].clone();
            let take = alloc[i].clamp(1, rows.len() - 1);
            rows.shuffle(rng);
            for &r in &rows[..take] {
                in_val[r] = true;
            }
        }
    }

    if !pool.is_empty() {
        pool.shuffle(rng);
        let mut take = round_half_even(pool.len() as f64 * fraction);
        if strat_total == 0 {
            take = clamp_val(take, pool.len());
        }
        for &r in &pool[..take.min(pool.len())] {
            in_val[r] = true;
        }
    }
}

fn clamp_val(n_val: usize, n: usize) -> usize {
    n_val.clamp(1, n - 1)
}

fn round_half_even(x: f64) -> usize {
    let r = x.round();
    let v = if (x - x.trunc() - 0.5).abs() < 1e-12 && (r as i64) % 2 != 0 {
        r - 1.0
    } else {
        r
    };
    v.max(0.0) as usize
}
