//! Binary decision trees with vector leaves, grown on per-row residual and
//! hessian statistics.
//!
//! A leaf over rows `S` predicts `sum(r) / (sum(h) + lambda)` per output and
//! a split is worth `score(L) + score(R) - score(S)` with
//! `score = sum_k R_k^2 / (H_k + lambda)`. With one-hot targets as residuals
//! and unit hessians this is the Gini reduction (variance reduction for a
//! scalar target), which is how the randomized trees use it.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureColumn, FeatureMatrix};
use crate::rng::Rng;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Split {
    /// Left when `x <= threshold`.
    Numeric { feature: usize, threshold: f64 },
    /// Left when the category index equals `category`.
    Category { feature: usize, category: usize },
}

impl Split {
    pub fn goes_left(&self, x: &FeatureMatrix, row: usize) -> bool {
        match *self {
            Split::Numeric { feature, threshold } => x.numeric_value(feature, row) <= threshold,
            Split::Category { feature, category } => x.category(feature, row) == category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(Vec<f64>),
    Branch { split: Split, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &FeatureMatrix, row: usize) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Branch { split, left, right } => {
                    i = if split.goes_left(x, row) { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Branch { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

/// Per-row residuals and hessians, `k` outputs per row.
pub struct Stats<'a> {
    pub k: usize,
    pub r: &'a [f64],
    pub h: &'a [f64],
    pub lambda: f64,
}

impl Stats<'_> {
    fn sums(&self, rows: &[usize]) -> Acc {
        let mut a = Acc::new(self.k);
        for &i in rows {
            a.add(self, i);
        }
        a
    }
}

#[derive(Clone)]
struct Acc {
    r: Vec<f64>,
    h: Vec<f64>,
    n: usize,
}

impl Acc {
    fn new(k: usize) -> Self {
        Acc {
            r: vec![0.0; k],
            h: vec![0.0; k],
            n: 0,
        }
    }

    fn add(&mut self, s: &Stats, row: usize) {
        for j in 0..s.k {
            self.r[j] += s.r[row * s.k + j];
            self.h[j] += s.h[row * s.k + j];
        }
        self.n += 1;
    }

    fn add_acc(&mut self, o: &Acc) {
        for j in 0..self.r.len() {
            self.r[j] += o.r[j];
            self.h[j] += o.h[j];
        }
        self.n += o.n;
    }

    fn minus(&self, o: &Acc) -> Acc {
        Acc {
            r: self.r.iter().zip(&o.r).map(|(a, b)| a - b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a - b).collect(),
            n: self.n - o.n,
        }
    }

    fn score(&self, lambda: f64) -> f64 {
        self.r
            .iter()
            .zip(&self.h)
            .map(|(r, h)| if h + lambda > 0.0 { r * r / (h + lambda) } else { 0.0 })
            .sum()
    }

    fn leaf(&self, lambda: f64) -> Vec<f64> {
        self.r
            .iter()
            .zip(&self.h)
            .map(|(r, h)| if h + lambda > 0.0 { r / (h + lambda) } else { 0.0 })
            .collect()
    }
}

fn partition(x: &FeatureMatrix, rows: &[usize], split: &Split) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| split.goes_left(x, r))
}

/// Options of the greedy (exact or histogram) grower.
#[derive(Debug, Clone, Copy)]
pub struct GrowOptions {
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// Candidate best split of one node.
#[derive(Clone)]
struct Best {
    gain: f64,
    split: Split,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.gain > a.gain { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Numeric views used by the greedy grower: every feature has a global
/// ascending row order; histogram mode additionally holds bin indices and
/// the upper edge of each bin.
pub struct Prepared {
    pub order: Vec<Option<Vec<u32>>>,
    pub bins: Option<Vec<Option<(Vec<u16>, Vec<f64>)>>>,
}

impl Prepared {
    pub fn exact(x: &FeatureMatrix) -> Prepared {
        let order = x
            .columns
            .par_iter()
            .map(|c| match c {
                FeatureColumn::Numeric(v) => {
                    let mut o: Vec<u32> = (0..v.len() as u32).collect();
                    o.sort_by(|&a, &b| v[a as usize].total_cmp(&v[b as usize]).then(a.cmp(&b)));
                    Some(o)
                }
                FeatureColumn::Categorical { .. } => None,
            })
            .collect();
        Prepared { order, bins: None }
    }

    /// Quantile bins with at most `max_bins` bins per numeric feature.
    pub fn histogram(x: &FeatureMatrix, max_bins: usize) -> Prepared {
        let bins = x
            .columns
            .par_iter()
            .map(|c| match c {
                FeatureColumn::Numeric(v) => {
                    let mut sorted = v.clone();
                    sorted.sort_by(f64::total_cmp);
                    sorted.dedup();
                    let edges: Vec<f64> = if sorted.len() <= max_bins {
                        sorted
                    } else {
                        let mut e: Vec<f64> = (1..max_bins)
                            .map(|q| sorted[(q * sorted.len()) / max_bins - 1])
                            .collect();
                        e.push(*sorted.last().expect("non-empty"));
                        e.dedup();
                        e
                    };
                    let idx = v
                        .iter()
                        .map(|x| edges.partition_point(|e| e < x).min(edges.len() - 1) as u16)
                        .collect();
                    Some((idx, edges))
                }
                FeatureColumn::Categorical { .. } => None,
            })
            .collect();
        Prepared {
            order: vec![None; x.columns.len()],
            bins: Some(bins),
        }
    }
}

/// Greedy level-wise growth over `rows` using every feature.
pub fn grow_greedy(x: &FeatureMatrix, prep: &Prepared, stats: &Stats, rows: Vec<usize>, opts: GrowOptions) -> Tree {
    let n = x.n_rows;
    let mut nodes = vec![Node::Leaf(Vec::new())];
    let mut node_of: Vec<u32> = vec![u32::MAX; n];
    // Active frontier: (tree node id, rows, sums).
    let root_sums = stats.sums(&rows);
    let mut frontier = vec![(0usize, rows, root_sums)];
    for depth in 0..=opts.max_depth {
        if frontier.is_empty() {
            break;
        }
        let can_split: Vec<bool> = frontier
            .iter()
            .map(|(_, rows, _)| depth < opts.max_depth && rows.len() >= 2 * opts.min_leaf.max(1))
            .collect();
        node_of.fill(u32::MAX);
        for (slot, (_, rows, _)) in frontier.iter().enumerate() {
            for &r in rows {
                node_of[r] = if can_split[slot] { slot as u32 } else { u32::MAX };
            }
        }
        let best: Vec<Option<Best>> = if can_split.iter().any(|&c| c) {
            let per_feature: Vec<Vec<Option<Best>>> = (0..x.columns.len())
                .into_par_iter()
                .map(|f| scan_feature(x, prep, stats, f, &frontier, &node_of, opts))
                .collect();
            (0..frontier.len())
                .map(|slot| per_feature.iter().fold(None, |acc, pf| better(acc, pf[slot].clone())))
                .collect()
        } else {
            vec![None; frontier.len()]
        };
        let mut next = Vec::new();
        for ((id, rows, sums), b) in frontier.into_iter().zip(best) {
            match b {
                Some(b) if b.gain > MIN_GAIN => {
                    let (l, r) = partition(x, &rows, &b.split);
                    let ls = stats.sums(&l);
                    let rs = sums.minus(&ls);
                    let left = nodes.len();
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes.push(Node::Leaf(Vec::new()));
                    nodes[id] = Node::Branch {
                        split: b.split,
                        left,
                        right: left + 1,
                    };
                    next.push((left, l, ls));
                    next.push((left + 1, r, rs));
                }
                _ => nodes[id] = Node::Leaf(sums.leaf(stats.lambda)),
            }
        }
        frontier = next;
    }
    for (id, _, sums) in frontier {
        nodes[id] = Node::Leaf(sums.leaf(stats.lambda));
    }
    Tree { nodes }
}

fn scan_feature(
    x: &FeatureMatrix,
    prep: &Prepared,
    stats: &Stats,
    f: usize,
    frontier: &[(usize, Vec<usize>, Acc)],
    node_of: &[u32],
    opts: GrowOptions,
) -> Vec<Option<Best>> {
    let m = frontier.len();
    let k = stats.k;
    let min_leaf = opts.min_leaf.max(1);
    let mut best: Vec<Option<Best>> = vec![None; m];
    let parent_score: Vec<f64> = frontier.iter().map(|(_, _, s)| s.score(stats.lambda)).collect();
    let consider = |slot: usize, left: &Acc, split: Split, best: &mut Vec<Option<Best>>| {
        let total = &frontier[slot].2;
        if left.n < min_leaf || total.n - left.n < min_leaf {
            return;
        }
        let right = total.minus(left);
        let gain = left.score(stats.lambda) + right.score(stats.lambda) - parent_score[slot];
        if best[slot].as_ref().is_none_or(|b| gain > b.gain) {
            best[slot] = Some(Best { gain, split });
        }
    };
    match &x.columns[f] {
        FeatureColumn::Categorical { codes, n_levels } => {
            let mut per = vec![Acc::new(k); m * n_levels];
            for (slot, (_, rows, _)) in frontier.iter().enumerate() {
                if node_of[rows[0]] == u32::MAX {
                    continue;
                }
                for &r in rows {
                    per[slot * n_levels + codes[r]].add(stats, r);
                }
            }
            for slot in 0..m {
                for c in 0..*n_levels {
                    let acc = &per[slot * n_levels + c];
                    if acc.n > 0 {
                        consider(slot, acc, Split::Category { feature: f, category: c }, &mut best);
                    }
                }
            }
        }
        FeatureColumn::Numeric(values) => {
            if let Some(bins) = &prep.bins {
                let (idx, edges) = bins[f].as_ref().expect("numeric feature is binned");
                let nb = edges.len();
                let mut hist = vec![Acc::new(k); m * nb];
                for (slot, (_, rows, _)) in frontier.iter().enumerate() {
                    if node_of[rows[0]] == u32::MAX {
                        continue;
                    }
                    for &r in rows {
                        hist[slot * nb + idx[r] as usize].add(stats, r);
                    }
                }
                for slot in 0..m {
                    let mut left = Acc::new(k);
                    for b in 0..nb.saturating_sub(1) {
                        left.add_acc(&hist[slot * nb + b]);
                        if hist[slot * nb + b].n == 0 {
                            continue;
                        }
                        consider(
                            slot,
                            &left,
                            Split::Numeric {
                                feature: f,
                                threshold: edges[b],
                            },
                            &mut best,
                        );
                    }
                }
            } else {
                let order = prep.order[f].as_ref().expect("numeric feature is sorted");
                let mut left = vec![Acc::new(k); m];
                let mut last = vec![f64::NAN; m];
                for &r in order {
                    let r = r as usize;
                    let slot = node_of[r];
                    if slot == u32::MAX {
                        continue;
                    }
                    let slot = slot as usize;
                    let v = values[r];
                    if left[slot].n > 0 && v > last[slot] {
                        let mut threshold = last[slot] + (v - last[slot]) / 2.0;
                        if threshold >= v {
                            threshold = last[slot];
                        }
                        let acc = left[slot].clone();
                        consider(slot, &acc, Split::Numeric { feature: f, threshold }, &mut best);
                    }
                    left[slot].add(stats, r);
                    last[slot] = v;
                }
            }
        }
    }
    best
}

/// Extremely randomized tree grown to purity: at each node up to
/// `n_candidates` non-constant features are drawn, each with one uniform
/// random threshold (or random present category), and the best is kept.
pub fn grow_random(x: &FeatureMatrix, stats: &Stats, n_candidates: usize, min_split: usize, rng: &mut Rng) -> Tree {
    let mut nodes = vec![Node::Leaf(Vec::new())];
    let mut stack = vec![(0usize, (0..x.n_rows).collect::<Vec<usize>>())];
    let mut features: Vec<usize> = (0..x.columns.len()).collect();
    while let Some((id, rows)) = stack.pop() {
        let sums = stats.sums(&rows);
        if rows.len() < min_split.max(2) || is_pure(stats, &rows) {
            nodes[id] = Node::Leaf(sums.leaf(stats.lambda));
            continue;
        }
        let parent = sums.score(stats.lambda);
        features.shuffle(rng);
        let mut tried = 0;
        let mut best: Option<Best> = None;
        for &f in &features {
            if tried == n_candidates {
                break;
            }
            let split = match &x.columns[f] {
                FeatureColumn::Numeric(v) => {
                    let (lo, hi) = rows
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(v[r]), hi.max(v[r])));
                    if lo >= hi {
                        continue;
                    }
                    let mut t = rng.random_range(lo..hi);
                    if t >= hi {
                        t = lo;
                    }
                    Split::Numeric { feature: f, threshold: t }
                }
                FeatureColumn::Categorical { codes, .. } => {
                    let mut present: Vec<usize> = rows.iter().map(|&r| codes[r]).collect();
                    present.sort_unstable();
                    present.dedup();
                    if present.len() < 2 {
                        continue;
                    }
                    Split::Category {
                        feature: f,
                        category: present[rng.random_range(0..present.len())],
                    }
                }
            };
            tried += 1;
            let mut left = Acc::new(stats.k);
            for &r in &rows {
                if split.goes_left(x, r) {
                    left.add(stats, r);
                }
            }
            let right = sums.minus(&left);
            let gain = left.score(stats.lambda) + right.score(stats.lambda) - parent;
            best = better(best, Some(Best { gain, split }));
        }
        match best {
            Some(b) => {
                let (l, r) = partition(x, &rows, &b.split);
                let left = nodes.len();
                nodes.push(Node::Leaf(Vec::new()));
                nodes.push(Node::Leaf(Vec::new()));
                nodes[id] = Node::Branch {
                    split: b.split,
                    left,
                    right: left + 1,
                };
                stack.push((left + 1, r));
                stack.push((left, l));
            }
            None => nodes[id] = Node::Leaf(sums.leaf(stats.lambda)),
        }
    }
    Tree { nodes }
}

fn is_pure(stats: &Stats, rows: &[usize]) -> bool {
    let k = stats.k;
    let first = &stats.r[rows[0] * k..rows[0] * k + k];
    rows.iter().all(|&r| &stats.r[r * k..r * k + k] == first)
}
