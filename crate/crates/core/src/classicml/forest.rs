//! Random forest of Gini-split decision trees over sparse features.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::SparseVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows every tree until its leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

pub const LEAF: usize = usize::MAX;

/// Flat binary tree. Node `i` splits on `x[feature[i]] <= threshold[i]`
/// (left) or is a leaf when `feature[i] == LEAF`; `value` holds each
/// node's class distribution, row-major `[node, class]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub feature: Vec<usize>,
    pub threshold: Vec<f64>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn leaf_distribution(&self, x: &SparseVector, n_classes: usize) -> &[f64] {
        let mut node = 0;
        while self.feature[node] != LEAF {
            node = if x.get(self.feature[node]) <= self.threshold[node] {
                self.left[node]
            } else {
                self.right[node]
            };
        }
        &self.value[node * n_classes..(node + 1) * n_classes]
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    xs: &'a [SparseVector],
    ys: &'a [usize],
    n_classes: usize,
    n_try: usize,
    cfg: &'a ForestConfig,
    tree: Tree,
}

impl Builder<'_> {
    fn push_node(&mut self, counts: &[usize], n: usize) -> usize {
        let id = self.tree.feature.len();
        self.tree.feature.push(LEAF);
        self.tree.threshold.push(0.0);
        self.tree.left.push(LEAF);
        self.tree.right.push(LEAF);
        self.tree
            .value
            .extend(counts.iter().map(|&c| c as f64 / n.max(1) as f64));
        id
    }

    /// Best (feature, threshold, weighted child impurity) among the
    /// candidate features; ties keep the earliest candidate and threshold.
    fn best_split(&self, samples: &[usize], candidates: &[usize]) -> Option<(usize, f64, f64)> {
        let n = samples.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &j in candidates {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.xs[i].get(j), self.ys[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = vec![0usize; self.n_classes];
            let mut right = vec![0usize; self.n_classes];
            for &(_, y) in &pairs {
                right[y] += 1;
            }
            for k in 0..n - 1 {
                let y = pairs[k].1;
                left[y] += 1;
                right[y] -= 1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = k + 1;
                let impurity = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|b| impurity < b.2) {
                    best = Some((j, 0.5 * (pairs[k].0 + pairs[k + 1].0), impurity));
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in &samples {
            counts[self.ys[i]] += 1;
        }
        let n = samples.len();
        let node = self.push_node(&counts, n);
        let parent = gini(&counts, n);
        if parent == 0.0 || n < self.cfg.min_samples_split || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return node;
        }
        // Candidate features are sampled among those active in this node.
        let active: Vec<usize> = samples
            .iter()
            .flat_map(|&i| self.xs[i].entries.iter().map(|e| e.0))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if active.is_empty() {
            return node;
        }
        let candidates: Vec<usize> = if active.len() <= self.n_try {
            active
        } else {
            let mut picked: Vec<usize> = sample(rng, active.len(), self.n_try)
                .into_iter()
                .map(|k| active[k])
                .collect();
            picked.sort_unstable();
            picked
        };
        let Some((feature, threshold, impurity)) = self.best_split(&samples, &candidates) else {
            return node;
        };
        if impurity >= parent - 1e-12 {
            return node;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = samples.into_iter().partition(|&i| self.xs[i].get(feature) <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.tree.feature[node] = feature;
        self.tree.threshold[node] = threshold;
        self.tree.left[node] = left;
        self.tree.right[node] = right;
        node
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Trees are grown in parallel, each from its own seed, on bootstrap
    /// samples; ⌈√F⌉ candidate features per node.
    pub fn fit(
        xs: &[SparseVector],
        ys: &[usize],
        n_classes: usize,
        n_features: usize,
        cfg: &ForestConfig,
        seed: u64,
    ) -> RandomForest {
        let n_try = ((n_features as f64).sqrt().ceil() as usize).max(1);
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(t as u64));
                let n = xs.len();
                let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut b = Builder {
                    xs,
                    ys,
                    n_classes,
                    n_try,
                    cfg,
                    tree: Tree {
                        feature: Vec::new(),
                        threshold: Vec::new(),
                        left: Vec::new(),
                        right: Vec::new(),
                        value: Vec::new(),
                    },
                };
                b.grow(boot, 0, &mut rng);
                b.tree
            })
            .collect();
        RandomForest { n_classes, trees }
    }

    /// Mean of the trees' leaf distributions.
    pub fn distribution(&self, x: &SparseVector) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.leaf_distribution(x, self.n_classes)) {
                *o += v;
            }
        }
        let n = self.trees.len().max(1) as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }
}
