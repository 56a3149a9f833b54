//! Command-line workflows: generate an exemplar into an output directory,
//! then analyse practice recordings against it.
//!
//! Output layout of [`run_pipeline`]:
//!
//! ```text
//! <out>/exemplar.mp4    narrated video
//! <out>/manifest.json   slide timeline and per-slide synthesis modes
//! <out>/script.json     narration script
//! <out>/script.txt      the same, readable
//! <out>/session.json    id of the session inside <out>/store
//! <out>/store/          session store holding every artifact
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::audio::sniff_container;
use crate::coach::{analyze_practice, AnalysisReport, CoachContext, PracticeRecording, SlideRange};
use crate::config::Config;
use crate::deck::ingest_deck;
use crate::ids::new_id;
use crate::media::MediaToolchain;
use crate::pipeline::{run_exemplar, ExemplarArtifacts, PipelineContext, PipelineError};
use crate::progress::Progress;
use crate::store::{Attachment, PracticeRef, Stage, Store};
use crate::video::{Resolution, TimelineEntry};
use crate::voice::{normalize_audio, prepare_voice_profile, SynthesisMode};

#[derive(Debug, thiserror::Error)]
pub enum HeadlessError {
    #[error("{0}")]
    Input(String),
    #[error("step {step} failed: {source}")]
    Pipeline {
        step: usize,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Config(#[from] crate::providers::ConfigError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Deck(#[from] crate::deck::DeckError),
    #[error(transparent)]
    Voice(#[from] crate::voice::VoiceError),
    #[error(transparent)]
    Analysis(#[from] crate::coach::AnalysisError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPointer {
    pub session_id: String,
    pub store: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub slide_index: usize,
    pub duration_ms: u64,
    pub synthesis_mode: SynthesisMode,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub entries: Vec<TimelineEntry>,
    pub total_duration_ms: u64,
    pub probed_duration_ms: u64,
    pub resolution: Resolution,
    pub fps: u32,
    pub segments: Vec<SegmentSummary>,
    pub warnings: Vec<String>,
}

impl ManifestFile {
    pub fn from_artifacts(a: &ExemplarArtifacts) -> Self {
        Self {
            entries: a.video.manifest.clone(),
            total_duration_ms: a.video.total_duration_ms,
            probed_duration_ms: a.video.probed_duration_ms,
            resolution: a.video.resolution,
            fps: a.video.fps,
            segments: a
                .audio
                .iter()
                .map(|s| SegmentSummary {
                    slide_index: s.slide_index,
                    duration_ms: s.duration_ms,
                    synthesis_mode: s.synthesis_mode,
                })
                .collect(),
            warnings: a.warnings.clone(),
        }
    }
}

fn context(config: &Config, store: Arc<Store>) -> Result<PipelineContext, HeadlessError> {
    let media = MediaToolchain::discover(config.ffmpeg.as_deref()).ok();
    Ok(PipelineContext::new(
        store,
        Arc::new(config.providers.build()?),
        media,
        config.renderer.build(),
        config.pipeline.clone(),
        config.coach.clone(),
    ))
}

/// Generates an exemplar for `deck` narrated in the voice of `voice`.
pub async fn run_pipeline(
    config: &Config,
    deck: &Path,
    voice: &Path,
    prompt: &str,
    out: &Path,
    progress: &dyn Progress,
) -> Result<ExemplarArtifacts, HeadlessError> {
    std::fs::create_dir_all(out)?;
    let store = Arc::new(Store::open(out.join("store"))?);
    let ctx = context(config, store.clone())?;
    let blobs = store.blobs();

    let deck_bytes = std::fs::read(deck)
        .map_err(|e| HeadlessError::Input(format!("{}: {e}", deck.display())))?;
    let voice_bytes = std::fs::read(voice)
        .map_err(|e| HeadlessError::Input(format!("{}: {e}", voice.display())))?;
    let container = sniff_container(&voice_bytes).ok_or_else(|| {
        HeadlessError::Input(format!("{} is not WebM, M4A or WAV", voice.display()))
    })?;

    let session = store.create_session(prompt)?;
    std::fs::write(
        out.join("session.json"),
        serde_json::to_vec_pretty(&SessionPointer {
            session_id: session.id.clone(),
            store: PathBuf::from("store"),
        })?,
    )?;
    let slides = ingest_deck(&deck_bytes, blobs, config.limits.max_deck_bytes)?;
    store.attach_artifact(&session.id, Attachment::Deck(blobs.put_json(&slides)?))?;
    let sample = blobs.put(&voice_bytes, container.media_kind())?;
    let profile = prepare_voice_profile(
        blobs,
        &sample,
        ctx.settings.audio,
        ctx.settings.min_voice_sample_ms,
        ctx.media.as_ref(),
    )
    .await?;
    if let Some(m) = &profile.message {
        eprintln!("warning: {m}");
    }
    store.attach_artifact(
        &session.id,
        Attachment::VoiceProfile(blobs.put_json(&profile)?),
    )?;
    store.transition_stage(&session.id, Stage::Generating)?;

    let artifacts = run_exemplar(&ctx, &session.id, progress)
        .await
        .map_err(|(step, source)| HeadlessError::Pipeline {
            step: step + 1,
            source,
        })?;

    std::fs::copy(
        blobs.path_of(&artifacts.video.video_ref),
        out.join("exemplar.mp4"),
    )?;
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_vec_pretty(&ManifestFile::from_artifacts(&artifacts))?,
    )?;
    std::fs::write(
        out.join("script.json"),
        serde_json::to_vec_pretty(&artifacts.script)?,
    )?;
    std::fs::write(out.join("script.txt"), artifacts.script.to_text())?;
    Ok(artifacts)
}

/// Analyses `practice` against the exemplar stored in `session_dir` (an
/// output directory of [`run_pipeline`]). The report is also written to
/// `<session_dir>/reports/<id>.json`.
pub async fn analyze_recording(
    config: &Config,
    session_dir: &Path,
    practice: &Path,
    slide_range: Option<SlideRange>,
    progress: &dyn Progress,
) -> Result<(AnalysisReport, PathBuf), HeadlessError> {
    let pointer: SessionPointer = serde_json::from_slice(
        &std::fs::read(session_dir.join("session.json")).map_err(|e| {
            HeadlessError::Input(format!(
                "{} is not a pipeline output: {e}",
                session_dir.display()
            ))
        })?,
    )?;
    let store = Arc::new(Store::open(session_dir.join(&pointer.store))?);
    let ctx = context(config, store.clone())?;
    let blobs = store.blobs();
    let session = store.load_session(&pointer.session_id)?;
    if session.stage != Stage::Coaching {
        return Err(HeadlessError::Input(format!(
            "session is in stage {}; generate an exemplar first",
            session.stage
        )));
    }

    let slide_range = match (slide_range, &session.exemplar_ref) {
        (Some(r), Some(e)) => {
            let n = blobs.get_json::<ExemplarArtifacts>(e)?.deck.slide_count;
            Some(SlideRange {
                from_index: r.from_index,
                to_index: r.to_index.min(n),
            })
        }
        (r, _) => r,
    };
    let bytes = std::fs::read(practice)
        .map_err(|e| HeadlessError::Input(format!("{}: {e}", practice.display())))?;
    let container = sniff_container(&bytes).ok_or_else(|| {
        HeadlessError::Input(format!("{} is not WebM, M4A or WAV", practice.display()))
    })?;
    let original = blobs.put(&bytes, container.media_kind())?;
    let (audio_ref, norm) =
        normalize_audio(blobs, &original, ctx.settings.audio, ctx.media.as_ref()).await?;
    let recording = PracticeRecording {
        id: new_id(),
        session_id: session.id.clone(),
        audio_ref,
        duration_ms: norm.duration_ms(),
        slide_range,
        recorded_at: chrono::Utc::now(),
        original_format: container,
    };
    store.attach_artifact(
        &session.id,
        Attachment::Practice(PracticeRef {
            id: recording.id.clone(),
            record: blobs.put_json(&recording)?,
        }),
    )?;

    let coach = CoachContext {
        store: &store,
        providers: &ctx.providers,
        settings: &ctx.coach,
    };
    let report = analyze_practice(&coach, &session.id, &recording.id, progress).await?;
    let dir = session_dir.join("reports");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.json", report.id));
    std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    Ok((report, path))
}
