//! HTTP service over the ABSA core: comment ingestion into an append-only
//! log, prediction with the active model, cached per-product summaries,
//! and background training jobs that register new model bundles.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness and the active model id |
//! | GET | `/products` | products with comment counts |
//! | GET | `/products/{id}/summary` | aspect proportions and sentiment distributions |
//! | GET | `/products/{id}/aspects/{aspect}` | one content aspect's distribution and comment ids |
//! | POST | `/comments` | ingest rows (token) |
//! | POST | `/predict` | `{"text"}` or `{"texts"}` |
//! | POST | `/train` | start a training job (token) |
//! | GET | `/train/{job}` | job status and epoch history |
//! | GET | `/models` | registered bundles |
//! | POST | `/models/{id}/activate` | swap the active model (token) |

pub mod api;
pub mod error;
pub mod jobs;
pub mod registry;
pub mod store;
pub mod summaries;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{router, AppState};
pub use error::{ApiError, StoreError};
pub use jobs::JobManager;
pub use registry::ModelRegistry;
pub use store::CommentStore;
pub use summaries::SummaryCache;

pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub listen_addr: String,
    pub data_dir: PathBuf,
    pub api_token: Option<String>,
}

impl ServiceConfig {
    /// Reads `LISTEN_ADDR`, `DATA_DIR` and `API_TOKEN`, with defaults
    /// `127.0.0.1:8080`, `./data` and no token.
    pub fn from_env() -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        ServiceConfig {
            listen_addr: var("LISTEN_ADDR").unwrap_or_else(|| DEFAULT_LISTEN_ADDR.into()),
            data_dir: var("DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            api_token: var("API_TOKEN"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the comment log and model registry under `data_dir`.
pub fn open_state(data_dir: &std::path::Path, api_token: Option<String>) -> Result<Arc<AppState>, StoreError> {
    let store = CommentStore::open(&data_dir.join("comments.jsonl"))?;
    let registry = ModelRegistry::open(&data_dir.join("models"))?;
    Ok(Arc::new(AppState {
        store: Arc::new(store),
        registry: Arc::new(registry),
        jobs: JobManager::new(),
        summaries: SummaryCache::new(),
        api_token,
    }))
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    if config.api_token.is_none() {
        log::warn!("API_TOKEN is not set; mutating endpoints are unauthenticated");
    }
    let state = open_state(&config.data_dir, config.api_token.clone())?;
    let listener = tokio::net::TcpListener::bind(&config.listen_addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen_addr.clone(),
            source,
        })?;
    let addr: SocketAddr = listener.local_addr()?;
    log::info!(
        "listening on http://{addr} (data in {}, {} comments)",
        config.data_dir.display(),
        state.store.snapshot().n_comments()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await?;
    Ok(())
}
