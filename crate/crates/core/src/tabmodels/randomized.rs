//! Extremely randomized trees.

use rayon::prelude::*;

use super::tree::{grow_random, Stats, Tree};
use super::{one_hot, FeatureMatrix};
use crate::error::Result;
use crate::frame::Task;
use crate::prediction::Target;
use crate::rng;

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ErtModel {
    pub trees: Vec<Tree>,
    pub width: usize,
}

impl ErtModel {
    /// Grows `n_trees` unpruned trees on the full sample; each split draws
    /// `sqrt(n_features)` candidate features with one random cut each.
    pub fn fit(x: &FeatureMatrix, y: &Target, task: Task, width: usize, n_trees: usize, seed: u64) -> Result<ErtModel> {
        let k = if task == Task::Regression { 1 } else { width };
        let r = one_hot(y, k);
        let h = vec![1.0; r.len()];
        let stats = Stats { k, r: &r, h: &h, lambda: 0.0 };
        let candidates = ((x.columns.len() as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| grow_random(x, &stats, candidates, 2, &mut rng::seeded(rng::derive_seed(seed, t as u64))))
            .collect();
        Ok(ErtModel { trees, width: k })
    }

    /// Leaf averages over all trees, row-major.
    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        let k = self.width;
        let mut out = vec![0.0; x.n_rows * k];
        let scale = 1.0 / self.trees.len() as f64;
        for tree in &self.trees {
            for r in 0..x.n_rows {
                for (o, v) in out[r * k..(r + 1) * k].iter_mut().zip(tree.leaf_for(x, r)) {
                    *o += v * scale;
                }
            }
        }
        out
    }
}
