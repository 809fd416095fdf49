//! Adam (dense and row-sparse) and global-norm gradient clipping.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingTable, SparseRowGrad};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

fn check_finite(grads: &[f32]) -> Result<()> {
    if grads.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("gradient".into()))
    }
}

/// One bias-corrected Adam step at 1-based `step`.
pub fn adam_update(
    params: &mut [f32],
    grads: &[f32],
    state: &mut AdamState,
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidInput("adam step counter starts at 1".into()));
    }
    check_finite(grads)?;
    let (c1, c2) = bias_corrections(step, cfg);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        adam_scalar(p, g, m, v, c1, c2, cfg);
    }
    Ok(())
}

fn bias_corrections(step: u64, cfg: &AdamConfig) -> (f32, f32) {
    let t = step.min(i32::MAX as u64) as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

#[inline]
fn adam_scalar(p: &mut f32, g: f32, m: &mut f32, v: &mut f32, c1: f32, c2: f32, cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// Row-addressable parameter storage.
pub trait RowStore {
    fn row_mut(&mut self, r: usize) -> &mut [f32];
}

impl RowStore for EmbeddingTable {
    fn row_mut(&mut self, r: usize) -> &mut [f32] {
        EmbeddingTable::row_mut(self, r)
    }
}

impl RowStore for Vec<Vec<f32>> {
    fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self[r]
    }
}

/// Lazy Adam for embedding tables: only rows that received a gradient in
/// this step have their moments and values updated.
#[derive(Clone, Debug, Default)]
pub struct SparseAdam {
    moments: HashMap<usize, AdamState>,
}

impl SparseAdam {
    pub fn new() -> Self {
        SparseAdam::default()
    }

    pub fn n_tracked_rows(&self) -> usize {
        self.moments.len()
    }

    pub fn update<S: RowStore + ?Sized>(
        &mut self,
        grads: &SparseRowGrad,
        step: u64,
        cfg: &AdamConfig,
        table: &mut S,
    ) -> Result<()> {
        for g in grads.rows.values() {
            check_finite(g)?;
        }
        for (&r, g) in &grads.rows {
            let state = self.moments.entry(r).or_insert_with(|| AdamState::zeros(g.len()));
            adam_update(table.row_mut(r), g, state, step, cfg)?;
        }
        Ok(())
    }
}

/// Scales all gradients so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(dense: &mut [&mut [f32]], sparse: Option<&mut SparseRowGrad>, max_norm: f32) -> f32 {
    let mut sq: f64 = dense
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| f64::from(x) * f64::from(x))
        .sum();
    if let Some(s) = sparse.as_deref() {
        sq += s.sq_norm();
    }
    let norm = sq.sqrt() as f32;
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in dense.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
        if let Some(s) = sparse {
            s.scale(scale);
        }
    }
    norm
}
