//! HTTP API consumed by the web client. JSON everywhere except uploads
//! (multipart), media downloads and the job event stream (SSE).

mod error;
mod handlers;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use tower_http::services::{ServeDir, ServeFile};

pub use error::{ApiError, ErrorBody};
pub use handlers::{
    CreateSession, DeckUploaded, GenerateAccepted, SendChat, SessionView, SetPrompt,
};

use crate::chat::ChatGate;
use crate::config::{Config, Limits};
use crate::media::MediaToolchain;
use crate::pipeline::{JobManager, PipelineContext, RecoverySummary};
use crate::providers::ConfigError;
use crate::store::{Store, StoreError};

/// Multipart framing allowance on top of the file itself.
const MULTIPART_SLACK: u64 = 1024 * 1024;

pub struct AppState {
    pub ctx: Arc<PipelineContext>,
    pub jobs: Arc<JobManager>,
    pub chat_gate: ChatGate,
    pub limits: Limits,
    pub chat_budget_chars: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl AppState {
    /// Opens the store, recovers interrupted jobs and builds providers.
    pub fn open(config: &Config) -> Result<(Arc<Self>, RecoverySummary), StartupError> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let recovered = JobManager::recover(&store)?;
        let providers = Arc::new(config.providers.build()?);
        let media = match MediaToolchain::discover(config.ffmpeg.as_deref()) {
            Ok(m) => Some(m),
            Err(e) => {
                tracing::warn!(%e, "ffmpeg not found; video assembly and audio conversion are disabled");
                None
            }
        };
        let ctx = PipelineContext::new(
            store.clone(),
            providers,
            media,
            config.renderer.build(),
            config.pipeline.clone(),
            config.coach.clone(),
        );
        let state = Self {
            ctx: Arc::new(ctx),
            jobs: Arc::new(JobManager::new(&store, config.workers)),
            chat_gate: ChatGate::default(),
            limits: config.limits,
            chat_budget_chars: config.chat_budget_chars,
        };
        Ok((Arc::new(state), recovered))
    }
}

pub fn router(state: Arc<AppState>, webapp_dir: Option<PathBuf>) -> Router {
    use handlers::*;
    let deck_limit =
        DefaultBodyLimit::max((state.limits.max_deck_bytes + MULTIPART_SLACK) as usize);
    let audio_limit =
        DefaultBodyLimit::max((state.limits.max_audio_bytes + MULTIPART_SLACK) as usize);
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route(
            "/api/sessions/{id}",
            get(get_session).delete(delete_session),
        )
        .route(
            "/api/sessions/{id}/deck",
            post(upload_deck).layer(deck_limit),
        )
        .route("/api/sessions/{id}/slides/{index}/image", get(slide_image))
        .route(
            "/api/sessions/{id}/voice",
            post(upload_voice).layer(audio_limit),
        )
        .route("/api/sessions/{id}/prompt", put(set_prompt))
        .route("/api/sessions/{id}/generate", post(generate))
        .route("/api/sessions/{id}/exemplar", get(exemplar_video))
        .route(
            "/api/sessions/{id}/exemplar/manifest",
            get(exemplar_manifest),
        )
        .route("/api/sessions/{id}/exemplar/script", get(exemplar_script))
        .route(
            "/api/sessions/{id}/exemplar/artifacts",
            get(exemplar_artifacts),
        )
        .route(
            "/api/sessions/{id}/practice",
            post(upload_practice).layer(audio_limit),
        )
        .route("/api/sessions/{id}/reports", get(list_reports))
        .route("/api/sessions/{id}/chat", post(send_chat).get(chat_history))
        .route("/api/practice/{id}/analyze", post(analyze))
        .route("/api/practice/{id}/report", get(practice_report))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/events", get(job_events))
        .with_state(state);
    match webapp_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(
    state: Arc<AppState>,
    addr: SocketAddr,
    webapp_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, webapp_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
