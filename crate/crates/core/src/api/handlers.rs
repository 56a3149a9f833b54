use axum::body::Body;
use axum::extract::{Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;
use tower::ServiceExt;
use tower_http::services::ServeFile;

use super::{ApiError, AppState};
use crate::audio::{sniff_container, AudioContainer};
use crate::chat::{load_reports, send_message};
use crate::coach::{
    analyze_practice, AnalysisReport, CoachContext, PracticeRecording, SlideRange, ANALYSIS_STEPS,
};
use crate::deck::{ingest_deck, SlideDeck};
use crate::ids::new_id;
use crate::pipeline::{
    prepare_deck, run_exemplar, ExemplarArtifacts, JobKind, PipelineJob, EXEMPLAR_STEPS,
};
use crate::store::{Attachment, ChatMessage, PracticeRef, Session, SessionSummary, Stage};
use crate::voice::{normalize_audio, prepare_voice_profile, VoiceProfile};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct CreateSession {
    pub user_prompt: String,
}

#[derive(Debug, Deserialize)]
pub struct SetPrompt {
    pub user_prompt: String,
}

#[derive(Debug, Deserialize)]
pub struct SendChat {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateAccepted {
    pub job_id: String,
}

/// Deck upload response: the deck plus where each preview image is served.
#[derive(Debug, Serialize, Deserialize)]
pub struct DeckUploaded {
    #[serde(flatten)]
    pub deck: SlideDeck,
    /// `/api/sessions/{id}/slides/{n}/image` for n = 1..=slide_count.
    pub preview_urls: Vec<String>,
}

/// A session with the records its references point at resolved.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session: Session,
    pub deck: Option<SlideDeck>,
    pub voice_profile: Option<VoiceProfile>,
    pub active_job: Option<String>,
}

struct Upload {
    bytes: Vec<u8>,
    filename: Option<String>,
    fields: HashMap<String, String>,
}

/// Reads the `file` part, enforcing `max` bytes, plus any text fields.
async fn read_upload(mut multipart: Multipart, max: u64) -> ApiResult<Upload> {
    let mut file = None;
    let mut fields = HashMap::new();
    while let Some(mut field) = multipart.next_field().await? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            let filename = field.file_name().map(str::to_string);
            let mut bytes = Vec::new();
            while let Some(chunk) = field.chunk().await? {
                bytes.extend_from_slice(&chunk);
                if bytes.len() as u64 > max {
                    return Err(ApiError::too_large(bytes.len() as u64, max));
                }
            }
            file = Some((bytes, filename));
        } else {
            fields.insert(name, field.text().await?);
        }
    }
    let (bytes, filename) =
        file.ok_or_else(|| ApiError::bad_request("multipart field \"file\" is missing"))?;
    if bytes.is_empty() {
        return Err(ApiError::bad_request("uploaded file is empty"));
    }
    Ok(Upload {
        bytes,
        filename,
        fields,
    })
}

fn require_stage(session: &Session, stage: Stage, what: &str) -> ApiResult<()> {
    if session.stage != stage {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "wrong_stage",
            format!(
                "{what} needs stage {stage}; session is in {}",
                session.stage
            ),
        ));
    }
    Ok(())
}

fn audio_container(upload: &Upload) -> ApiResult<AudioContainer> {
    sniff_container(&upload.bytes)
        .or_else(|| {
            upload
                .filename
                .as_deref()
                .and_then(AudioContainer::from_name)
        })
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unsupported_audio",
                "audio must be WebM, M4A or WAV",
            )
        })
}

fn load_exemplar(state: &AppState, session_id: &str) -> ApiResult<ExemplarArtifacts> {
    let session = state.ctx.store.load_session(session_id)?;
    let r = session
        .exemplar_ref
        .ok_or_else(|| ApiError::not_found(format!("session {session_id} has no exemplar yet")))?;
    Ok(state.ctx.store.blobs().get_json(&r)?)
}

pub async fn health(State(state): Shared) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "ffmpeg": state.ctx.media.is_some(),
    }))
}

pub async fn create_session(
    State(state): Shared,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<Session>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let session = state.ctx.store.create_session(&req.user_prompt)?;
    Ok((StatusCode::CREATED, Json(session)))
}

pub async fn list_sessions(State(state): Shared) -> ApiResult<Json<Vec<SessionSummary>>> {
    Ok(Json(state.ctx.store.list_sessions()?))
}

pub async fn get_session(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let session = state.ctx.store.load_session(&id)?;
    let blobs = state.ctx.store.blobs();
    let deck = session
        .deck_ref
        .as_ref()
        .map(|r| blobs.get_json(r))
        .transpose()?;
    let voice_profile = session
        .voice_profile_ref
        .as_ref()
        .map(|r| blobs.get_json(r))
        .transpose()?;
    Ok(Json(SessionView {
        active_job: state.jobs.active_for(&id),
        session,
        deck,
        voice_profile,
    }))
}

pub async fn delete_session(State(state): Shared, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.jobs.active_for(&id).is_some() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "job_running",
            "a job is running for this session",
        ));
    }
    state.ctx.store.delete_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Validates, extracts and renders the deck so slide previews are
/// available before generation.
pub async fn upload_deck(
    State(state): Shared,
    Path(id): Path<String>,
    multipart: Multipart,
) -> ApiResult<Json<DeckUploaded>> {
    let session = state.ctx.store.load_session(&id)?;
    require_stage(&session, Stage::Setup, "deck upload")?;
    let max = state.limits.max_deck_bytes;
    let upload = read_upload(multipart, max).await?;
    let blobs = state.ctx.store.blobs().clone();
    let deck = tokio::task::spawn_blocking(move || ingest_deck(&upload.bytes, &blobs, max))
        .await
        .map_err(|e| ApiError::bad_request(format!("deck parsing crashed: {e}")))??;
    let deck = prepare_deck(&state.ctx, deck).await?;
    let record = state.ctx.store.blobs().put_json(&deck)?;
    state
        .ctx
        .store
        .attach_artifact(&id, Attachment::Deck(record))?;
    let preview_urls = (1..=deck.slide_count)
        .map(|n| format!("/api/sessions/{id}/slides/{n}/image"))
        .collect();
    Ok(Json(DeckUploaded { deck, preview_urls }))
}

pub async fn slide_image(
    State(state): Shared,
    Path((id, index)): Path<(String, usize)>,
) -> ApiResult<Response> {
    let session = state.ctx.store.load_session(&id)?;
    let deck_ref = session
        .deck_ref
        .ok_or_else(|| ApiError::not_found(format!("session {id} has no deck")))?;
    let deck: SlideDeck = state.ctx.store.blobs().get_json(&deck_ref)?;
    let image = deck
        .slides
        .get(index.wrapping_sub(1))
        .and_then(|s| s.image_ref.clone())
        .ok_or_else(|| ApiError::not_found(format!("slide {index} image")))?;
    let bytes = state.ctx.store.blobs().get(&image)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub async fn upload_voice(
    State(state): Shared,
    Path(id): Path<String>,
    multipart: Multipart,
) -> ApiResult<Json<VoiceProfile>> {
    let session = state.ctx.store.load_session(&id)?;
    require_stage(&session, Stage::Setup, "voice upload")?;
    let upload = read_upload(multipart, state.limits.max_audio_bytes).await?;
    let container = audio_container(&upload)?;
    let blobs = state.ctx.store.blobs();
    let sample = blobs.put(&upload.bytes, container.media_kind())?;
    let profile = prepare_voice_profile(
        blobs,
        &sample,
        state.ctx.settings.audio,
        state.ctx.settings.min_voice_sample_ms,
        state.ctx.media.as_ref(),
    )
    .await?;
    let record = blobs.put_json(&profile)?;
    state
        .ctx
        .store
        .attach_artifact(&id, Attachment::VoiceProfile(record))?;
    Ok(Json(profile))
}

pub async fn set_prompt(
    State(state): Shared,
    Path(id): Path<String>,
    Json(req): Json<SetPrompt>,
) -> ApiResult<Json<Session>> {
    Ok(Json(
        state.ctx.store.set_user_prompt(&id, &req.user_prompt)?,
    ))
}

fn job_running(job_id: String) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "job_running",
        "a job is already running for this session",
    )
    .with_detail(serde_json::json!({ "job_id": job_id }))
}

pub async fn generate(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<GenerateAccepted>)> {
    if let Some(job) = state.jobs.active_for(&id) {
        return Err(job_running(job));
    }
    state.ctx.store.transition_stage(&id, Stage::Generating)?;
    let ctx = state.ctx.clone();
    let session_id = id.clone();
    let spawned = state.jobs.spawn(
        &id,
        JobKind::Exemplar,
        None,
        &EXEMPLAR_STEPS,
        move |entry| async move {
            match run_exemplar(&ctx, &session_id, entry.as_ref()).await {
                Ok(a) => entry.complete(Some(a.video.video_ref.content_hash)),
                Err((step, e)) => entry.fail(step, e.to_string()),
            }
        },
    );
    match spawned {
        Some(entry) => Ok((
            StatusCode::ACCEPTED,
            Json(GenerateAccepted { job_id: entry.id() }),
        )),
        None => {
            crate::pipeline::revert_to_setup(&state.ctx.store, &id)?;
            Err(job_running(state.jobs.active_for(&id).unwrap_or_default()))
        }
    }
}

pub async fn get_job(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<PipelineJob>> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job {id}")))
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    from: Option<u64>,
}

/// Progress events as SSE. The event id is the sequence number; a client
/// reconnecting with `Last-Event-ID: k` receives events from `k + 1`.
pub async fn job_events(
    State(state): Shared,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl futures::Stream<Item = Result<Event, Infallible>>>> {
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let from = last.map(|k| k + 1).or(q.from).unwrap_or(0);
    let stream = state
        .jobs
        .subscribe(&id, from)
        .ok_or_else(|| ApiError::not_found(format!("job {id}")))?;
    let events = stream.map(|e| {
        let data = serde_json::to_string(&e).expect("event serializes");
        Ok(Event::default()
            .id(e.sequence.to_string())
            .event("progress")
            .data(data))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

pub async fn exemplar_video(
    State(state): Shared,
    Path(id): Path<String>,
    req: Request,
) -> ApiResult<Response> {
    let artifacts = load_exemplar(&state, &id)?;
    let path = state.ctx.store.blobs().path_of(&artifacts.video.video_ref);
    let resp = ServeFile::new_with_mime(path, &"video/mp4".parse().expect("valid mime"))
        .oneshot(req)
        .await
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(resp.map(Body::new))
}

pub async fn exemplar_manifest(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<crate::video::ExemplarVideo>> {
    Ok(Json(load_exemplar(&state, &id)?.video))
}

pub async fn exemplar_script(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<crate::script::NarrationScript>> {
    Ok(Json(load_exemplar(&state, &id)?.script))
}

pub async fn exemplar_artifacts(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<ExemplarArtifacts>> {
    Ok(Json(load_exemplar(&state, &id)?))
}

fn parse_index(fields: &HashMap<String, String>, key: &str) -> ApiResult<Option<usize>> {
    fields
        .get(key)
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("{key} must be a slide number")))
        })
        .transpose()
}

/// Stores a practice recording (normalized to WAV) for later analysis.
/// Optional `from_slide` / `to_slide` fields restrict it to a slide range.
pub async fn upload_practice(
    State(state): Shared,
    Path(id): Path<String>,
    multipart: Multipart,
) -> ApiResult<(StatusCode, Json<PracticeRecording>)> {
    let session = state.ctx.store.load_session(&id)?;
    require_stage(&session, Stage::Coaching, "practice upload")?;
    let exemplar = load_exemplar(&state, &id)?;
    let upload = read_upload(multipart, state.limits.max_audio_bytes).await?;
    let slide_range = match (
        parse_index(&upload.fields, "from_slide")?,
        parse_index(&upload.fields, "to_slide")?,
    ) {
        (None, None) => None,
        (from, to) => {
            let r = SlideRange {
                from_index: from.unwrap_or(1),
                to_index: to.unwrap_or(exemplar.deck.slide_count),
            };
            r.check(exemplar.deck.slide_count)
                .map_err(ApiError::bad_request)?;
            Some(r)
        }
    };
    let container = audio_container(&upload)?;
    let blobs = state.ctx.store.blobs();
    let original = blobs.put(&upload.bytes, container.media_kind())?;
    let (audio_ref, norm) = normalize_audio(
        blobs,
        &original,
        state.ctx.settings.audio,
        state.ctx.media.as_ref(),
    )
    .await?;
    if norm.duration_ms() == 0 {
        return Err(ApiError::bad_request("recording is empty"));
    }
    let recording = PracticeRecording {
        id: new_id(),
        session_id: id.clone(),
        audio_ref,
        duration_ms: norm.duration_ms(),
        slide_range,
        recorded_at: Utc::now(),
        original_format: container,
    };
    let record = blobs.put_json(&recording)?;
    state.ctx.store.attach_artifact(
        &id,
        Attachment::Practice(PracticeRef {
            id: recording.id.clone(),
            record,
        }),
    )?;
    Ok((StatusCode::CREATED, Json(recording)))
}

pub async fn analyze(
    State(state): Shared,
    Path(practice_id): Path<String>,
) -> ApiResult<(StatusCode, Json<GenerateAccepted>)> {
    let (session, _) = state.ctx.store.find_practice(&practice_id)?;
    require_stage(&session, Stage::Coaching, "analysis")?;
    if let Some(job) = state.jobs.active_for(&session.id) {
        return Err(job_running(job));
    }
    let ctx = state.ctx.clone();
    let session_id = session.id.clone();
    let pid = practice_id.clone();
    let spawned = state.jobs.spawn(
        &session.id,
        JobKind::Analysis,
        Some(practice_id),
        &ANALYSIS_STEPS,
        move |entry| async move {
            let coach = CoachContext {
                store: &ctx.store,
                providers: &ctx.providers,
                settings: &ctx.coach,
            };
            match analyze_practice(&coach, &session_id, &pid, entry.as_ref()).await {
                Ok(report) => match &report.failure {
                    Some(f) => {
                        let step = ANALYSIS_STEPS
                            .iter()
                            .position(|s| *s == f.stage)
                            .unwrap_or(0);
                        entry.fail(step, f.message.clone());
                    }
                    None => entry.complete(Some(report.id.clone())),
                },
                Err(e) => {
                    let step = entry.snapshot().running_step().unwrap_or(0);
                    entry.fail(step, e.to_string());
                }
            }
        },
    );
    match spawned {
        Some(entry) => Ok((
            StatusCode::ACCEPTED,
            Json(GenerateAccepted { job_id: entry.id() }),
        )),
        None => Err(job_running(
            state.jobs.active_for(&session.id).unwrap_or_default(),
        )),
    }
}

pub async fn practice_report(
    State(state): Shared,
    Path(practice_id): Path<String>,
) -> ApiResult<Json<AnalysisReport>> {
    let (session, _) = state.ctx.store.find_practice(&practice_id)?;
    let r = session
        .analysis_refs
        .iter()
        .rev()
        .find(|a| a.practice_id == practice_id)
        .ok_or_else(|| ApiError::not_found(format!("no analysis for practice {practice_id}")))?;
    Ok(Json(state.ctx.store.blobs().get_json(&r.record)?))
}

pub async fn list_reports(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<AnalysisReport>>> {
    Ok(Json(load_reports(&state.ctx.store, &id)?))
}

pub async fn send_chat(
    State(state): Shared,
    Path(id): Path<String>,
    Json(req): Json<SendChat>,
) -> ApiResult<Json<ChatMessage>> {
    let reply = send_message(
        &state.ctx.store,
        &state.ctx.providers.llm_chat,
        &state.chat_gate,
        &id,
        &req.text,
        state.chat_budget_chars,
    )
    .await?;
    Ok(Json(reply))
}

pub async fn chat_history(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<ChatMessage>>> {
    Ok(Json(state.ctx.store.load_session(&id)?.chat_history))
}
