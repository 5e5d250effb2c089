//! Local HTTP service: image upload, persisted configuration and
//! asynchronous registration jobs with PNG assets and zip export.

pub mod config_store;
pub mod error;
pub mod jobs;
mod routes;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::Router;
use craqreg_core::ImageBuffer;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

pub use config_store::{default_config_path, ConfigStore, PersistedConfig};
pub use error::ApiError;
pub use jobs::{Job, JobRecord, JobState};

/// Service settings fixed at startup.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Config file; `None` keeps the configuration in memory only.
    pub config_path: Option<PathBuf>,
    /// Largest accepted image, in pixels.
    pub max_pixels: u64,
    /// Registrations executed concurrently.
    pub parallelism: usize,
    /// Largest accepted request body, in bytes.
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            config_path: Some(default_config_path()),
            max_pixels: 200_000_000,
            parallelism: 1,
            body_limit: 1 << 30,
        }
    }
}

#[derive(Debug)]
struct Inner {
    images: RwLock<HashMap<String, Arc<ImageBuffer>>>,
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    config: ConfigStore,
    queue: Arc<Semaphore>,
    max_pixels: u64,
    body_limit: usize,
}

/// Shared service state; cheap to clone.
#[derive(Debug, Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                images: RwLock::default(),
                jobs: RwLock::default(),
                config: ConfigStore::open(cfg.config_path),
                queue: Arc::new(Semaphore::new(cfg.parallelism.max(1))),
                max_pixels: cfg.max_pixels,
                body_limit: cfg.body_limit,
            }),
        }
    }

    pub fn config(&self) -> &ConfigStore {
        &self.inner.config
    }

    fn image(&self, id: &str) -> Result<Arc<ImageBuffer>, ApiError> {
        self.inner
            .images
            .read()
            .expect("image table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound {
                kind: "image",
                id: id.to_string(),
            })
    }

    fn insert_image(&self, img: ImageBuffer) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        self.inner
            .images
            .write()
            .expect("image table lock")
            .insert(id.clone(), Arc::new(img));
        id
    }

    fn job(&self, id: &str) -> Result<Arc<Job>, ApiError> {
        self.inner
            .jobs
            .read()
            .expect("job table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound {
                kind: "registration",
                id: id.to_string(),
            })
    }

    fn insert_job(&self, id: String, job: Arc<Job>) {
        self.inner.jobs.write().expect("job table lock").insert(id, job);
    }
}

pub fn router(state: AppState) -> Router {
    routes::router(state)
}

/// Serves the API on `listener` until the process is stopped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
