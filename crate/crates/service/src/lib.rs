//! HTTP service over the plan-explanation pipeline.
//!
//! Each run lives in its own directory under the data directory (the same
//! layout the command-line tool writes), so runs created either way are
//! visible to both. Cheap stages execute inside the request; refinement runs
//! as a background job whose progress is polled through `GET /runs/{id}`.

mod error;
mod handlers;
pub mod schema;

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use parking_lot::{Mutex, RwLock};
use planexplain_core::api::JobStatus;
use planexplain_core::pipeline::Run;
use planexplain_core::refine::RemoteConfig;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Allowed browser origins; empty or `*` allows any.
    pub cors_origins: Vec<String>,
    pub max_body_bytes: usize,
    /// Chat endpoint for `backend: remote`; unset means only the
    /// deterministic backend is available.
    pub remote: Option<RemoteConfig>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            cors_origins: Vec::new(),
            max_body_bytes: 8 * 1024 * 1024,
            remote: None,
        }
    }
}

/// One registered run. The run itself sits behind a reader/writer lock;
/// `job` tracks background refinement and `follow_ups` serializes
/// follow-up requests so concurrent ones cannot drop each other's revisions.
struct Slot {
    run: RwLock<Run>,
    job: Mutex<Option<JobStatus>>,
    follow_ups: Mutex<()>,
}

impl Slot {
    fn new(run: Run) -> Arc<Slot> {
        Arc::new(Slot {
            run: RwLock::new(run),
            job: Mutex::new(None),
            follow_ups: Mutex::new(()),
        })
    }
}

struct Inner {
    cfg: ServiceConfig,
    runs: RwLock<BTreeMap<String, Arc<Slot>>>,
    creating: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and registers every run found in it.
    pub fn open(cfg: ServiceConfig) -> planexplain_core::Result<AppState> {
        std::fs::create_dir_all(&cfg.data_dir)?;
        let mut runs = BTreeMap::new();
        for entry in std::fs::read_dir(&cfg.data_dir)? {
            let path = entry?.path();
            if !path.join("state.json").is_file() {
                continue;
            }
            match Run::open(&path) {
                Ok(run) => {
                    runs.insert(run.state().corpus_id.clone(), Slot::new(run));
                }
                Err(e) => tracing::warn!(path = %path.display(), "skipping unreadable run: {e}"),
            }
        }
        tracing::info!(runs = runs.len(), dir = %cfg.data_dir.display(), "data directory opened");
        Ok(AppState(Arc::new(Inner {
            cfg,
            runs: RwLock::new(runs),
            creating: Mutex::new(()),
        })))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.cfg
    }

    fn slot(&self, id: &str) -> Option<Arc<Slot>> {
        self.0.runs.read().get(id).cloned()
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.is_empty() || origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_body_bytes;
    let cors = cors(&state.config().cors_origins);
    Router::new()
        .route("/healthz", get(handlers::health))
        .route("/schema", get(handlers::schema))
        .route("/runs", get(handlers::list_runs).post(handlers::create_run))
        .route("/runs/{id}", get(handlers::get_run))
        .route("/runs/{id}/advance", post(handlers::advance))
        .route("/runs/{id}/pairs", get(handlers::list_pairs))
        .route("/runs/{id}/pairs/{pid}", get(handlers::get_pair))
        .route("/runs/{id}/pairs/{pid}/followup", post(handlers::follow_up))
        .fallback(handlers::no_route)
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .layer(tower_http::trace::TraceLayer::new_for_http())
        .with_state(state)
}

/// Serves until `shutdown` resolves. Every stage persists its artifacts when
/// it completes, so stopping loses at most a refinement job in progress.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
