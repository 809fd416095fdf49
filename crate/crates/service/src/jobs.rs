//! Background training jobs, one at a time.

use std::collections::BTreeMap;
use std::sync::Arc;

use absa_core::classicml::{train_classic, ClassicConfig, ClassicKind};
use absa_core::corpus::{split_dataset, SplitRatios};
use absa_core::models::{set_config_value, train, AnyModel, Architecture, EpochRecord, ModelConfig, TrainConfig};
use absa_core::Dataset;
use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::registry::ModelRegistry;

/// Fraction of the labelled store held out for early stopping.
const DEV_FRACTION: f64 = 0.1;

/// `POST /train` body. `settings` uses the keys of the CLI config file.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub architecture: Option<String>,
    #[serde(default)]
    pub settings: BTreeMap<String, Value>,
}

#[derive(Clone, Debug)]
pub enum TrainPlan {
    Neural(ModelConfig, TrainConfig),
    Classic(ClassicConfig),
}

impl TrainPlan {
    /// Validates a request into a plan; errors are client errors.
    pub fn from_request(req: &TrainRequest) -> Result<TrainPlan, String> {
        let mut model = ModelConfig::default();
        let mut tc = TrainConfig::default();
        for (key, value) in &req.settings {
            let text = match value {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                other => return Err(format!("setting {key:?} has unsupported value {other}")),
            };
            if key == "vectors" {
                return Err("`vectors` cannot be set through the service".into());
            }
            set_config_value(key, &text, &mut model, &mut tc).map_err(|e| e.to_string())?;
        }
        let arch = req.architecture.as_deref().unwrap_or(Architecture::BilstmSa2sl.name());
        if let Ok(kind) = arch.parse::<ClassicKind>() {
            return Ok(TrainPlan::Classic(ClassicConfig::new(kind, tc.seed)));
        }
        model.architecture = arch.parse().map_err(|e: absa_core::Error| e.to_string())?;
        model.validate().map_err(|e| e.to_string())?;
        tc.validate().map_err(|e| e.to_string())?;
        Ok(TrainPlan::Neural(model, tc))
    }

    pub fn name(&self) -> String {
        match self {
            TrainPlan::Neural(m, _) => m.architecture.to_string(),
            TrainPlan::Classic(c) => c.kind.to_string(),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            TrainPlan::Neural(_, tc) => tc.seed,
            TrainPlan::Classic(c) => c.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub state: JobState,
    pub architecture: String,
    pub n_train: usize,
    pub n_dev: usize,
    pub epochs: Vec<EpochRecord>,
    /// Registered (not activated) bundle id once the job is done.
    pub model_id: Option<String>,
    pub error: Option<String>,
    pub submitted_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Default)]
struct Jobs {
    next_id: u64,
    busy: bool,
    jobs: BTreeMap<u64, JobStatus>,
}

#[derive(Clone, Default)]
pub struct JobManager {
    inner: Arc<Mutex<Jobs>>,
}

/// Another job is still queued or running.
#[derive(Debug)]
pub struct Busy(pub u64);

impl JobManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self, id: u64) -> Option<JobStatus> {
        self.inner.lock().jobs.get(&id).cloned()
    }

    /// Starts `plan` on a dedicated thread over `data`; on success the model
    /// is registered but not activated.
    pub fn submit(&self, plan: TrainPlan, data: Dataset, registry: Arc<ModelRegistry>) -> Result<u64, Busy> {
        let id = {
            let mut jobs = self.inner.lock();
            if jobs.busy {
                let running = jobs
                    .jobs
                    .values()
                    .rev()
                    .find(|j| matches!(j.state, JobState::Queued | JobState::Running))
                    .map_or(0, |j| j.id);
                return Err(Busy(running));
            }
            jobs.busy = true;
            jobs.next_id += 1;
            let id = jobs.next_id;
            jobs.jobs.insert(
                id,
                JobStatus {
                    id,
                    state: JobState::Queued,
                    architecture: plan.name(),
                    n_train: 0,
                    n_dev: 0,
                    epochs: Vec::new(),
                    model_id: None,
                    error: None,
                    submitted_at: Utc::now(),
                    finished_at: None,
                },
            );
            id
        };
        let inner = self.inner.clone();
        let spawned = std::thread::Builder::new()
            .name(format!("train-job-{id}"))
            .spawn(move || {
                let result = run_job(id, &inner, plan, data, &registry);
                let mut jobs = inner.lock();
                jobs.busy = false;
                let job = jobs.jobs.get_mut(&id).expect("job exists");
                job.finished_at = Some(Utc::now());
                match result {
                    Ok(model_id) => {
                        log::info!("training job {id} finished: {model_id}");
                        job.state = JobState::Done;
                        job.model_id = Some(model_id);
                    }
                    Err(e) => {
                        log::warn!("training job {id} failed: {e}");
                        job.state = JobState::Failed;
                        job.error = Some(e);
                    }
                }
            });
        if let Err(e) = spawned {
            let mut jobs = self.inner.lock();
            jobs.busy = false;
            if let Some(job) = jobs.jobs.get_mut(&id) {
                job.state = JobState::Failed;
                job.error = Some(format!("could not start worker: {e}"));
            }
        }
        Ok(id)
    }
}

fn run_job(
    id: u64,
    inner: &Mutex<Jobs>,
    plan: TrainPlan,
    data: Dataset,
    registry: &ModelRegistry,
) -> Result<String, String> {
    if data.is_empty() {
        return Err("the store has no labelled comments".into());
    }
    let (train_set, dev_set) = if data.len() >= 10 {
        let ratios = SplitRatios {
            train: 1.0 - DEV_FRACTION,
            dev: DEV_FRACTION,
            test: 0.0,
        };
        let split = split_dataset(&data, ratios, plan.seed()).map_err(|e| e.to_string())?;
        (split.train, split.dev)
    } else {
        (data, Dataset::empty("dev"))
    };
    {
        let mut jobs = inner.lock();
        let job = jobs.jobs.get_mut(&id).expect("job exists");
        job.state = JobState::Running;
        job.n_train = train_set.len();
        job.n_dev = dev_set.len();
    }
    let model = match &plan {
        TrainPlan::Neural(mc, tc) => {
            let mut observer = |record: &EpochRecord| {
                if let Some(job) = inner.lock().jobs.get_mut(&id) {
                    job.epochs.push(record.clone());
                }
            };
            AnyModel::Neural(train(mc, tc, &train_set, &dev_set, &mut observer).map_err(|e| e.to_string())?)
        }
        TrainPlan::Classic(cfg) => AnyModel::Classic(train_classic(cfg, &train_set).map_err(|e| e.to_string())?),
    };
    registry.register(model).map_err(|e| e.to_string())
}
