//! Per-product summary cache keyed by (model id, comment-set hash).

use std::collections::HashMap;
use std::sync::Arc;

use absa_core::listening::{comment_set_hash, summarize_product, AspectSummary};
use absa_core::models::{AnyModel, Predictor};
use absa_core::{Comment, Result};
use parking_lot::{Mutex, RwLock};

#[derive(Default)]
pub struct SummaryCache {
    entries: RwLock<HashMap<String, Arc<AspectSummary>>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SummaryCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn cached(&self, product: &str, model_id: &str, hash: &str) -> Option<Arc<AspectSummary>> {
        self.entries
            .read()
            .get(product)
            .filter(|s| s.model_id == model_id && s.comment_set_hash == hash)
            .cloned()
    }

    /// Returns the cached summary when neither the comments nor the model
    /// changed, otherwise recomputes it under the product's lock.
    pub fn get_or_compute(&self, product: &str, comments: &[Comment], model: &AnyModel) -> Result<Arc<AspectSummary>> {
        let hash = comment_set_hash(comments);
        if let Some(s) = self.cached(product, model.model_id(), &hash) {
            return Ok(s);
        }
        let lock = self.locks.lock().entry(product.to_string()).or_default().clone();
        let _guard = lock.lock();
        if let Some(s) = self.cached(product, model.model_id(), &hash) {
            return Ok(s);
        }
        let summary = Arc::new(summarize_product(product, comments, model)?);
        self.entries.write().insert(product.to_string(), summary.clone());
        Ok(summary)
    }
}
