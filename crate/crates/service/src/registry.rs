//! Trained-model bundles on disk plus the atomically swapped active model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use absa_core::models::{load_model, AnyModel, Predictor};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::StoreError;

const ACTIVE_FILE: &str = "active.json";

#[derive(Serialize, Deserialize)]
struct ActivePointer {
    active: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: String,
    pub active: bool,
}

pub struct ModelRegistry {
    dir: PathBuf,
    models: RwLock<BTreeMap<String, Arc<AnyModel>>>,
    active: RwLock<Option<Arc<AnyModel>>>,
    /// Serializes registrations and activations.
    write: Mutex<()>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

impl ModelRegistry {
    /// Loads every bundle under `dir` and restores the active pointer.
    /// Unreadable bundles are skipped with a warning.
    pub fn open(dir: &Path) -> Result<ModelRegistry, StoreError> {
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        let mut models = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| StoreError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| StoreError::io(dir, e))?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if !path.is_dir() || name.starts_with('.') {
                continue;
            }
            match load_model(&path) {
                Ok(m) => {
                    models.insert(m.model_id().to_string(), Arc::new(m));
                }
                Err(e) => log::warn!("skipping model bundle {}: {e}", path.display()),
            }
        }
        let pointer = dir.join(ACTIVE_FILE);
        let mut active = None;
        if pointer.exists() {
            let text = fs::read_to_string(&pointer).map_err(|e| StoreError::io(&pointer, e))?;
            let p: ActivePointer = serde_json::from_str(&text)?;
            match models.get(&p.active) {
                Some(m) => active = Some(m.clone()),
                None => log::warn!("active model {} has no bundle; no model is active", p.active),
            }
        }
        Ok(ModelRegistry {
            dir: dir.to_path_buf(),
            models: RwLock::new(models),
            active: RwLock::new(active),
            write: Mutex::new(()),
        })
    }

    /// Persists `model` as an immutable bundle named by its id. Registering
    /// an id twice keeps the first bundle.
    pub fn register(&self, model: AnyModel) -> Result<String, StoreError> {
        let _guard = self.write.lock();
        let id = model.model_id().to_string();
        if self.models.read().contains_key(&id) {
            return Ok(id);
        }
        let target = self.dir.join(&id);
        let staging = self.dir.join(format!(".staging-{id}"));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| StoreError::io(&staging, e))?;
        }
        model.save(&staging)?;
        if target.exists() {
            fs::remove_dir_all(&target).map_err(|e| StoreError::io(&target, e))?;
        }
        fs::rename(&staging, &target).map_err(|e| StoreError::io(&target, e))?;
        self.models.write().insert(id.clone(), Arc::new(model));
        log::info!("registered model {id}");
        Ok(id)
    }

    /// Points the service at a registered model. Requests already holding
    /// the previous model finish with it.
    pub fn activate(&self, id: &str) -> Result<Option<Arc<AnyModel>>, StoreError> {
        let _guard = self.write.lock();
        let Some(model) = self.models.read().get(id).cloned() else {
            return Ok(None);
        };
        let pointer = serde_json::to_vec(&ActivePointer { active: id.to_string() })?;
        write_atomic(&self.dir.join(ACTIVE_FILE), &pointer)?;
        *self.active.write() = Some(model.clone());
        log::info!("activated model {id}");
        Ok(Some(model))
    }

    pub fn active(&self) -> Option<Arc<AnyModel>> {
        self.active.read().clone()
    }

    pub fn get(&self, id: &str) -> Option<Arc<AnyModel>> {
        self.models.read().get(id).cloned()
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        let active = self.active().map(|m| m.model_id().to_string());
        self.models
            .read()
            .values()
            .map(|m| ModelInfo {
                id: m.model_id().to_string(),
                kind: m.kind(),
                active: active.as_deref() == Some(m.model_id()),
            })
            .collect()
    }
}
