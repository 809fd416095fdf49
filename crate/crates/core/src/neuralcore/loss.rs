//! Output heads and the multi-task training objective.
//!
//! The dense layer emits 42 logits: one 4-way head `{Absent, Pos, Neu, Neg}`
//! per content aspect followed by a 2-way `{Absent, Present}` head for OTHERS.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dense::softmax;
use super::tensor::{lit, Scalar};
use crate::corpus::{Aspect, AspectState, LabelSet};
use crate::error::{Error, Result};

pub const N_HEADS: usize = 11;
pub const N_LOGITS: usize = 10 * 4 + 2;

pub fn head_size(aspect: Aspect) -> usize {
    if aspect.is_content() {
        4
    } else {
        2
    }
}

pub fn head_range(aspect: Aspect) -> Range<usize> {
    let start = aspect.index() * 4;
    start..start + head_size(aspect)
}

/// Class index of `aspect` under `labels`: 0 Absent, 1 Pos, 2 Neu, 3 Neg
/// (OTHERS: 0 Absent, 1 Present).
pub fn gold_class(labels: &LabelSet, aspect: Aspect) -> usize {
    match labels.get(aspect) {
        AspectState::Absent => 0,
        AspectState::Polar(p) => 1 + p.index(),
        AspectState::Present => 1,
    }
}

/// Softmax applied to each head's slice of the logits.
pub fn head_softmax<F: Scalar>(logits: &[F]) -> Vec<Vec<F>> {
    Aspect::ALL.iter().map(|&a| softmax(&logits[head_range(a)])).collect()
}

/// Per-head, per-class loss multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<Vec<f32>>,
}

impl ClassWeights {
    /// Inverse-frequency weights `n / (k · count)`, normalized per head; classes
    /// never seen get weight 1.
    pub fn inverse_frequency(golds: &[LabelSet]) -> ClassWeights {
        let weights = Aspect::ALL
            .iter()
            .map(|&a| {
                let k = head_size(a);
                let mut counts = vec![0usize; k];
                for g in golds {
                    counts[gold_class(g, a)] += 1;
                }
                let n = golds.len().max(1) as f32;
                counts
                    .iter()
                    .map(|&c| if c == 0 { 1.0 } else { n / (k as f32 * c as f32) })
                    .collect()
            })
            .collect();
        ClassWeights { weights }
    }
}

/// Mean over the 11 heads of the cross-entropy of each head's distribution
/// against the gold class.
pub fn multitask_loss<F: Scalar>(heads: &[Vec<F>], gold: &LabelSet) -> Result<F> {
    if heads.len() != N_HEADS {
        return Err(Error::Shape(format!("expected {N_HEADS} heads, got {}", heads.len())));
    }
    let tol: F = lit(1e-4);
    let mut total = F::zero();
    for (&aspect, head) in Aspect::ALL.iter().zip(heads) {
        if head.len() != head_size(aspect) {
            return Err(Error::Shape(format!("{aspect} head has {} classes", head.len())));
        }
        let sum: F = head.iter().copied().sum();
        if (sum - F::one()).abs() > tol || head.iter().any(|p| *p < F::zero()) {
            return Err(Error::InvalidInput(format!("{aspect} head is not a distribution")));
        }
        let p = head[gold_class(gold, aspect)].max(F::min_positive_value());
        total -= p.ln();
    }
    Ok(total / lit(N_HEADS as f64))
}

/// Loss from raw logits and its gradient with respect to those logits.
pub fn multitask_loss_and_grad<F: Scalar>(
    logits: &[F],
    gold: &LabelSet,
    weights: Option<&ClassWeights>,
) -> Result<(F, Vec<F>)> {
    if logits.len() != N_LOGITS {
        return Err(Error::Shape(format!(
            "expected {N_LOGITS} logits, got {}",
            logits.len()
        )));
    }
    let scale: F = lit(1.0 / N_HEADS as f64);
    let mut loss = F::zero();
    let mut grad = vec![F::zero(); N_LOGITS];
    for &aspect in &Aspect::ALL {
        let range = head_range(aspect);
        let probs = softmax(&logits[range.clone()]);
        let y = gold_class(gold, aspect);
        let w: F = weights.map_or(F::one(), |cw| lit(f64::from(cw.weights[aspect.index()][y])));
        loss -= w * probs[y].max(F::min_positive_value()).ln();
        for (c, (g, p)) in grad[range].iter_mut().zip(&probs).enumerate() {
            let target = if c == y { F::one() } else { F::zero() };
            *g = w * (*p - target) * scale;
        }
    }
    Ok((loss * scale, grad))
}
