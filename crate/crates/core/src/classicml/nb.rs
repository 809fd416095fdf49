//! Multinomial Naive Bayes with Laplace smoothing.

use super::features::SparseVector;

pub const ALPHA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayes {
    pub n_classes: usize,
    pub n_features: usize,
    /// `ln P(c)` with add-one smoothing of the class counts.
    pub log_prior: Vec<f64>,
    /// Row-major `[class, feature]` of `ln θ_cj`, θ_cj = (N_cj + α) / (N_c + α·F).
    pub log_likelihood: Vec<f64>,
}

impl NaiveBayes {
    pub fn fit(xs: &[SparseVector], ys: &[usize], n_classes: usize, n_features: usize) -> NaiveBayes {
        let mut class_docs = vec![0usize; n_classes];
        let mut counts = vec![0.0f64; n_classes * n_features];
        let mut totals = vec![0.0f64; n_classes];
        for (x, &y) in xs.iter().zip(ys) {
            class_docs[y] += 1;
            for &(j, v) in &x.entries {
                counts[y * n_features + j] += v;
                totals[y] += v;
            }
        }
        let n = xs.len() as f64;
        let log_prior = class_docs
            .iter()
            .map(|&c| ((c as f64 + 1.0) / (n + n_classes as f64)).ln())
            .collect();
        let log_likelihood = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let denom = totals[i / n_features] + ALPHA * n_features as f64;
                ((c + ALPHA) / denom).ln()
            })
            .collect();
        NaiveBayes {
            n_classes,
            n_features,
            log_prior,
            log_likelihood,
        }
    }

    /// Unnormalized log joint `ln P(c) + Σ x_j ln θ_cj`.
    pub fn log_joint(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                let row = &self.log_likelihood[c * self.n_features..(c + 1) * self.n_features];
                self.log_prior[c] + x.dot(row)
            })
            .collect()
    }

    /// Class posterior by normalizing the log joint (log-sum-exp).
    pub fn posterior(&self, x: &SparseVector) -> Vec<f64> {
        let lj = self.log_joint(x);
        let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lj.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(e: &[(usize, f64)]) -> SparseVector {
        SparseVector { entries: e.to_vec() }
    }

    #[test]
    fn posterior_matches_bayes_rule() {
        // Features {0: "good", 1: "bad"}; two classes.
        let xs = vec![
            sv(&[(0, 2.0)]),
            sv(&[(0, 1.0), (1, 1.0)]),
            sv(&[(1, 2.0)]),
            sv(&[(1, 1.0)]),
        ];
        let ys = vec![0, 0, 1, 1];
        let nb = NaiveBayes::fit(&xs, &ys, 2, 2);
        // Class 0: counts good 3, bad 1 → θ = (4/6, 2/6); class 1: good 0, bad 3 → (1/5, 4/5).
        let (p0, p1) = (0.5, 0.5);
        let x = sv(&[(0, 1.0), (1, 1.0)]);
        let j0 = p0 * (4.0 / 6.0) * (2.0 / 6.0);
        let j1 = p1 * (1.0 / 5.0) * (4.0 / 5.0);
        let post = nb.posterior(&x);
        assert!((post[0] - j0 / (j0 + j1)).abs() < 1e-12);
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(nb.log_likelihood.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn unseen_class_keeps_prior_mass() {
        let xs = vec![sv(&[(0, 1.0)]), sv(&[(0, 1.0)])];
        let nb = NaiveBayes::fit(&xs, &[0, 0], 3, 1);
        let post = nb.posterior(&sv(&[]));
        assert!(post[1] > 0.0 && post[2] > 0.0);
        assert!(post[0] > post[1]);
    }
}
