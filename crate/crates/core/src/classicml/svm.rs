//! Linear SVM, one-vs-rest, trained with the Pegasos subgradient method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::SparseVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// L2 regularization strength λ.
    pub lambda: f64,
    /// Passes over the training set (iterations = epochs × N).
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 20,
        }
    }
}

/// Per-class weight vectors; the last coordinate is a bias on a constant
/// feature of 1. Classes never seen in training are `None` (unreachable).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    pub n_features: usize,
    pub weights: Vec<Option<Vec<f64>>>,
}

/// Pegasos for one binary problem with labels ±1. The weight vector is kept
/// as `scale · v` so each step costs O(nnz).
fn pegasos(xs: &[SparseVector], ys: &[f64], n_features: usize, cfg: &SvmConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = vec![0.0f64; n_features + 1];
    let mut scale = 1.0f64;
    let n = xs.len();
    let iterations = cfg.epochs * n;
    for t in 1..=iterations {
        let i = rng.gen_range(0..n);
        let eta = 1.0 / (cfg.lambda * t as f64);
        let margin = scale * (xs[i].dot(&v[..n_features]) + v[n_features]) * ys[i];
        let shrink = 1.0 - eta * cfg.lambda;
        if shrink <= 0.0 {
            // t = 1: the weights are reset to zero before the step.
            v.iter_mut().for_each(|w| *w = 0.0);
            scale = 1.0;
        } else {
            scale *= shrink;
        }
        if margin < 1.0 {
            let step = eta * ys[i] / scale;
            for &(j, x) in &xs[i].entries {
                v[j] += step * x;
            }
            v[n_features] += step;
        }
        if scale < 1e-9 {
            v.iter_mut().for_each(|w| *w *= scale);
            scale = 1.0;
        }
    }
    v.iter_mut().for_each(|w| *w *= scale);
    v
}

impl LinearSvm {
    pub fn fit(
        xs: &[SparseVector],
        ys: &[usize],
        n_classes: usize,
        n_features: usize,
        cfg: &SvmConfig,
        seed: u64,
    ) -> LinearSvm {
        let weights = (0..n_classes)
            .map(|c| {
                let positives = ys.iter().filter(|&&y| y == c).count();
                if positives == 0 || xs.is_empty() {
                    return None;
                }
                let targets: Vec<f64> = ys.iter().map(|&y| if y == c { 1.0 } else { -1.0 }).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
                Some(pegasos(xs, &targets, n_features, cfg, &mut rng))
            })
            .collect();
        LinearSvm { n_features, weights }
    }

    /// Margin per class; unreachable classes score −∞.
    pub fn margins(&self, x: &SparseVector) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| match w {
                Some(w) => x.dot(&w[..self.n_features]) + w[self.n_features],
                None => f64::NEG_INFINITY,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_problem_is_fit_exactly() {
        let xs: Vec<SparseVector> = (0..20)
            .map(|i| SparseVector {
                entries: vec![(i % 2, 1.0), (2, 0.3)],
            })
            .collect();
        let ys: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let svm = LinearSvm::fit(&xs, &ys, 2, 3, &SvmConfig::default(), 1);
        for (x, &y) in xs.iter().zip(&ys) {
            let m = svm.margins(x);
            let pred = if m[1] > m[0] { 1 } else { 0 };
            assert_eq!(pred, y);
        }
        let again = LinearSvm::fit(&xs, &ys, 2, 3, &SvmConfig::default(), 1);
        assert_eq!(svm, again);
    }

    #[test]
    fn absent_class_is_unreachable() {
        let xs = vec![
            SparseVector {
                entries: vec![(0, 1.0)]
            };
            3
        ];
        let svm = LinearSvm::fit(&xs, &[0, 0, 0], 4, 1, &SvmConfig::default(), 0);
        assert!(svm.weights[1].is_none());
        assert_eq!(svm.margins(&xs[0])[3], f64::NEG_INFINITY);
    }
}
