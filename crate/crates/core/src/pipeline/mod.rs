//! Exemplar generation: slide rendering, narration, synthesis and video
//! assembly, plus the job machinery that runs pipelines in the background.

pub mod jobs;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub use jobs::{
    JobEntry, JobKind, JobManager, JobStep, Overall, PipelineJob, ProgressEvent, RecoverySummary,
    StepStatus,
};

use crate::audio::AudioSpec;
use crate::coach::CoachSettings;
use crate::deck::{
    apply_renders, DeckError, ExternalRenderer, RenderOptions, RenderPool, SlideDeck,
};
use crate::media::{MediaToolchain, VideoSpec};
use crate::progress::Progress;
use crate::providers::{OutcomeAudit, Providers};
use crate::script::{generate_script, NarrationScript, ScriptError, DEFAULT_REGENERATIONS};
use crate::store::{Attachment, Stage, Store, StoreError};
use crate::video::{assemble_exemplar, AssemblyError, AssemblyOptions, ExemplarVideo};
use crate::voice::{
    AudioSegment, BatchError, SynthesisMode, Synthesizer, VoiceProfile, DEFAULT_BATCH_PARALLELISM,
    DEFAULT_MIN_SAMPLE_MS,
};

pub const EXEMPLAR_STEPS: [&str; 4] = [
    "Parsing slide content",
    "Generating narration script",
    "Synthesizing audio track",
    "Assembling video",
];

/// Everything a finished generation produced. Stored as JSON and
/// referenced from the session's `exemplar_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarArtifacts {
    pub deck: SlideDeck,
    pub voice_profile: VoiceProfile,
    pub script: NarrationScript,
    pub audio: Vec<AudioSegment>,
    pub video: ExemplarVideo,
    pub audits: Vec<OutcomeAudit>,
    pub warnings: Vec<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub render: RenderOptions,
    pub audio: AudioSpec,
    pub video: VideoSpec,
    pub assembly: AssemblyOptions,
    pub max_regenerations: u32,
    pub synthesis_parallelism: usize,
    pub min_voice_sample_ms: u64,
    pub render_workers: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            render: RenderOptions::default(),
            audio: AudioSpec::default(),
            video: VideoSpec::default(),
            assembly: AssemblyOptions::default(),
            max_regenerations: DEFAULT_REGENERATIONS,
            synthesis_parallelism: DEFAULT_BATCH_PARALLELISM,
            min_voice_sample_ms: DEFAULT_MIN_SAMPLE_MS,
            render_workers: 2,
        }
    }
}

/// Shared services for pipelines and the API.
pub struct PipelineContext {
    pub store: Arc<Store>,
    pub providers: Arc<Providers>,
    pub media: Option<MediaToolchain>,
    pub renderer: Arc<dyn ExternalRenderer>,
    pub render_pool: RenderPool,
    pub settings: PipelineSettings,
    pub coach: CoachSettings,
}

impl PipelineContext {
    pub fn new(
        store: Arc<Store>,
        providers: Arc<Providers>,
        media: Option<MediaToolchain>,
        renderer: Arc<dyn ExternalRenderer>,
        settings: PipelineSettings,
        coach: CoachSettings,
    ) -> Self {
        Self {
            render_pool: RenderPool::new(settings.render_workers),
            store,
            providers,
            media,
            renderer,
            settings,
            coach,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("session is in stage {0}, expected generating")]
    WrongStage(Stage),
    #[error("session has no {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Deck(#[from] DeckError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Synthesis(#[from] BatchError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("ffmpeg is not available: {0}")]
    NoMedia(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Renders any slides that do not have images yet and checks that every
/// image blob is present.
pub async fn prepare_deck(
    ctx: &PipelineContext,
    mut deck: SlideDeck,
) -> Result<SlideDeck, DeckError> {
    let blobs = ctx.store.blobs();
    if !deck.is_rendered() {
        let source = blobs.get(&deck.source_ref)?;
        let rendered = ctx
            .render_pool
            .render(
                source,
                ctx.renderer.clone(),
                ctx.settings.render,
                blobs.clone(),
            )
            .await?;
        apply_renders(&mut deck, rendered)?;
    }
    for slide in &deck.slides {
        let image = slide.image_ref.as_ref().ok_or(DeckError::Integrity {
            expected: deck.slide_count,
            got: slide.index - 1,
        })?;
        blobs.get(image)?;
    }
    Ok(deck)
}

async fn generate(
    ctx: &PipelineContext,
    session_id: &str,
    progress: &dyn Progress,
) -> Result<ExemplarArtifacts, (usize, PipelineError)> {
    let blobs = ctx.store.blobs();
    let session = ctx
        .store
        .load_session(session_id)
        .map_err(|e| (0, e.into()))?;
    if session.stage != Stage::Generating {
        return Err((0, PipelineError::WrongStage(session.stage)));
    }
    let deck_ref = session
        .deck_ref
        .clone()
        .ok_or((0, PipelineError::Missing("slide deck")))?;
    let profile_ref = session
        .voice_profile_ref
        .clone()
        .ok_or((0, PipelineError::Missing("voice profile")))?;
    let mut warnings = Vec::new();
    let mut audits = Vec::new();

    progress.started(0);
    let deck: SlideDeck = blobs.get_json(&deck_ref).map_err(|e| (0, e.into()))?;
    let deck = prepare_deck(ctx, deck).await.map_err(|e| (0, e.into()))?;
    progress.finished(0, Some(format!("{} slides", deck.slide_count)));

    progress.started(1);
    let run = generate_script(
        &deck,
        &session.user_prompt,
        &ctx.providers.vlm_script,
        blobs,
        ctx.settings.max_regenerations,
        progress,
        1,
    )
    .await
    .map_err(|e| (1, e.into()))?;
    audits.extend(run.audits);
    let script = run.script;
    for s in &script.segments {
        if s.length_flag != crate::script::LengthFlag::Ok {
            warnings.push(format!(
                "slide {} narration is {} words",
                s.slide_index, s.word_count
            ));
        }
    }
    progress.finished(
        1,
        Some(format!(
            "{} words",
            script.segments.iter().map(|s| s.word_count).sum::<usize>()
        )),
    );

    progress.started(2);
    let profile: VoiceProfile = blobs.get_json(&profile_ref).map_err(|e| (2, e.into()))?;
    if let Some(m) = &profile.message {
        warnings.push(m.clone());
    }
    let synth = Synthesizer {
        chain: &ctx.providers.tts,
        blobs,
        media: ctx.media.as_ref(),
        target: ctx.settings.audio,
    };
    let segments = synth
        .synthesize_batch(
            &script,
            &profile,
            ctx.settings.synthesis_parallelism,
            progress,
            2,
        )
        .await
        .map_err(|e| (2, e.into()))?;
    let mut audio = Vec::with_capacity(segments.len());
    for s in segments {
        if s.segment.synthesis_mode == SynthesisMode::FallbackTts {
            warnings.push(format!(
                "slide {} used standard TTS ({})",
                s.segment.slide_index, s.audit.provider_used
            ));
        }
        audits.push(s.audit);
        audio.push(s.segment);
    }
    let total: u64 = audio.iter().map(|a| a.duration_ms).sum();
    progress.finished(2, Some(format!("{:.1} s of audio", total as f64 / 1000.0)));

    progress.started(3);
    let media = ctx.media.as_ref().ok_or_else(|| {
        (
            3,
            PipelineError::NoMedia("no ffmpeg binary configured or found".into()),
        )
    })?;
    let pairs: Vec<_> = deck
        .slides
        .iter()
        .zip(&audio)
        .map(|(s, a)| {
            (
                s.image_ref.clone().expect("prepared deck has images"),
                a.clone(),
            )
        })
        .collect();
    let video = assemble_exemplar(
        media,
        blobs,
        &pairs,
        ctx.settings.video,
        ctx.settings.assembly,
    )
    .await
    .map_err(|e| (3, e.into()))?;
    progress.finished(
        3,
        Some(format!(
            "{:.1} s video, probed {:.1} s",
            video.total_duration_ms as f64 / 1000.0,
            video.probed_duration_ms as f64 / 1000.0
        )),
    );

    Ok(ExemplarArtifacts {
        deck,
        voice_profile: profile,
        script,
        audio,
        video,
        audits,
        warnings,
        created_at: Utc::now(),
    })
}

/// Runs the four generation steps for a session already in `generating`.
/// On success the exemplar is attached and the session moves to
/// `coaching`; on failure it returns to `setup`. The error carries the
/// 0-based step that failed.
pub async fn run_exemplar(
    ctx: &PipelineContext,
    session_id: &str,
    progress: &dyn Progress,
) -> Result<ExemplarArtifacts, (usize, PipelineError)> {
    match generate(ctx, session_id, progress).await {
        Ok(artifacts) => {
            let finish = || -> Result<(), StoreError> {
                let record = ctx.store.blobs().put_json(&artifacts)?;
                ctx.store.update(session_id, |s| {
                    crate::store::apply_attachment(s, Attachment::Exemplar(record))?;
                    crate::store::apply_transition(s, Stage::Coaching)
                })?;
                Ok(())
            };
            finish().map_err(|e| (3, e.into()))?;
            Ok(artifacts)
        }
        Err(e) => {
            if let Err(revert) = revert_to_setup(&ctx.store, session_id) {
                tracing::error!(session_id, %revert, "could not revert session after failed generation");
            }
            Err(e)
        }
    }
}

/// Moves a `generating` session back to `setup`; other stages are left
/// alone.
pub fn revert_to_setup(store: &Store, session_id: &str) -> Result<(), StoreError> {
    store
        .update(session_id, |s| {
            if s.stage == Stage::Generating {
                crate::store::apply_transition(s, Stage::Setup)?;
            }
            Ok(())
        })
        .map(|_| ())
}
