//! HTTP/JSON service over the RaceLens engine: event and photo ingestion,
//! asynchronous processing jobs, filtered photo queries, overlays, feedback,
//! online metrics and team snapshots.

mod error;
mod jobs;
mod provider_server;
mod routes;
pub mod schema;
pub mod types;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::header;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use racelens_core::config::{Config, ConfigError, PipelineConfig};
use racelens_core::inference::{InferenceError, InferenceProvider};
use racelens_core::model::NumberRoster;
use racelens_core::store::{open_store, EventStore, StoreError};

pub use error::ApiError;
pub use jobs::Jobs;
pub use provider_server::provider_router;
pub use routes::overlay_of;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provider(#[from] InferenceError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    pub store: EventStore,
    pub provider: Arc<dyn InferenceProvider>,
    pub pipeline: Arc<PipelineConfig>,
    pub roster: Arc<NumberRoster>,
    pub token: Option<String>,
    pub upload_dir: PathBuf,
    pub workers: usize,
    pub jobs: Arc<Jobs>,
}

impl AppState {
    pub fn new(
        store: EventStore,
        provider: Arc<dyn InferenceProvider>,
        pipeline: PipelineConfig,
        roster: NumberRoster,
    ) -> Self {
        Self {
            store,
            provider,
            pipeline: Arc::new(pipeline),
            roster: Arc::new(roster),
            token: None,
            upload_dir: PathBuf::from("racelens-uploads"),
            workers: 1,
            jobs: Arc::default(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_upload_dir(mut self, dir: PathBuf) -> Self {
        self.upload_dir = dir;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn from_config(config: &Config) -> Result<Self, ServeError> {
        let store = EventStore::new(open_store(&config.store)?);
        let provider: Arc<dyn InferenceProvider> = Arc::from(config.provider.build(&config.pipeline.manufacturers)?);
        Ok(Self::new(store, provider, config.pipeline.clone(), config.load_roster()?)
            .with_token(config.api.token.clone())
            .with_upload_dir(config.upload_dir())
            .with_workers(config.workers))
    }
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &state.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(ApiError::Unauthorized);
        }
    }
    Ok(next.run(req).await)
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/events", post(routes::create_event).get(routes::list_events))
        .route("/events/{event_id}", get(routes::get_event))
        .route("/events/{event_id}/photos", post(routes::add_photos).get(routes::query_photos))
        .route("/events/{event_id}/process", post(routes::start_processing))
        .route("/events/{event_id}/metrics", get(routes::get_metrics))
        .route("/jobs/{job_id}", get(routes::get_job))
        .route("/photos/{photo_id}", get(routes::get_photo))
        .route("/photos/{photo_id}/overlay", get(routes::get_overlay))
        .route("/photos/{photo_id}/feedback", post(routes::submit_feedback))
        .route("/teams/{event_id}", get(routes::get_teams))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(routes::health))
        .merge(api)
        .fallback(routes::fallback)
        .with_state(state)
}

/// Binds `host:port` from the config and serves until the process ends.
pub async fn serve(config: &Config) -> Result<(), ServeError> {
    let state = tokio::task::block_in_place(|| AppState::from_config(config))?;
    let addr = format!("{}:{}", config.api.host, config.api.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, state).await?;
    Ok(())
}

/// Serves on an already bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
