//! Four-source analysis of a practice recording and the persisted report.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::audience::{simulate_audience, AudienceError, AudienceNote};
use super::feedback::{compose_feedback, FeedbackError, OisFeedback};
use super::metrics::{compute_delivery_metrics, DeliveryMetrics, FillerLexicon};
use super::pauses::PauseParams;
use super::Transcript;
use crate::audio::AudioContainer;
use crate::ids::new_id;
use crate::pipeline::ExemplarArtifacts;
use crate::progress::Progress;
use crate::providers::request::{AnalyzeDelivery, ScriptExcerpt};
use crate::providers::{
    Bytes, OutcomeAudit, ProviderChain, ProviderError, ProviderRequest, Providers,
};
use crate::store::{AnalysisRef, Attachment, BlobRef, BlobStore, Stage, Store, StoreError};

pub const ANALYSIS_STEPS: [&str; 5] = [
    "Transcribing recording",
    "Computing delivery metrics",
    "Analyzing delivery",
    "Simulating audience",
    "Composing feedback",
];

pub const DEFAULT_AUDIENCE: &str = "general audience";

pub const ANALYSIS_INSTRUCTIONS: &str = "Compare the speaker's practice recording with the ideal narration \
and its audio for the given slides. Comment on content coverage, pacing, pauses, fillers and clarity. \
Treat the supplied metrics as measured facts.";

/// Inclusive 1-based slide range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideRange {
    pub from_index: usize,
    pub to_index: usize,
}

impl SlideRange {
    pub fn all(slide_count: usize) -> Self {
        Self {
            from_index: 1,
            to_index: slide_count,
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.from_index..=self.to_index).contains(&index)
    }

    pub fn check(&self, slide_count: usize) -> Result<(), String> {
        if self.from_index == 0 || self.from_index > self.to_index || self.to_index > slide_count {
            return Err(format!(
                "slide range {}..{} is outside 1..{slide_count}",
                self.from_index, self.to_index
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeRecording {
    pub id: String,
    pub session_id: String,
    pub audio_ref: BlobRef,
    pub duration_ms: u64,
    pub slide_range: Option<SlideRange>,
    pub recorded_at: DateTime<Utc>,
    pub original_format: AudioContainer,
}

/// Which of the four analysis sources is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingSource {
    SlideImage = 1,
    IdealScript = 2,
    IdealAudio = 3,
    UserAudio = 4,
}

impl fmt::Display for MissingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::SlideImage => "slide image",
            Self::IdealScript => "ideal narration script",
            Self::IdealAudio => "ideal audio",
            Self::UserAudio => "user recording",
        };
        write!(f, "source ({}): {name}", *self as u8)
    }
}

impl std::error::Error for MissingSource {}

/// Slide images, ideal script, ideal audio and the user's recording.
/// Cannot exist with any of the four absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BundleWire")]
pub struct FourSourceBundle {
    slide_range: SlideRange,
    slide_image_refs: Vec<BlobRef>,
    ideal_script: Vec<ScriptExcerpt>,
    ideal_audio_refs: Vec<BlobRef>,
    user_audio_ref: BlobRef,
}

#[derive(Deserialize)]
struct BundleWire {
    slide_range: SlideRange,
    #[serde(default)]
    slide_image_refs: Vec<BlobRef>,
    #[serde(default)]
    ideal_script: Vec<ScriptExcerpt>,
    #[serde(default)]
    ideal_audio_refs: Vec<BlobRef>,
    user_audio_ref: Option<BlobRef>,
}

impl TryFrom<BundleWire> for FourSourceBundle {
    type Error = MissingSource;

    fn try_from(w: BundleWire) -> Result<Self, MissingSource> {
        let mut b = FourSourceBundle::builder()
            .slide_range(w.slide_range)
            .slide_images(w.slide_image_refs)
            .ideal_script(w.ideal_script)
            .ideal_audio(w.ideal_audio_refs);
        if let Some(u) = w.user_audio_ref {
            b = b.user_audio(u);
        }
        b.build()
    }
}

#[derive(Debug, Default, Clone)]
pub struct FourSourceBundleBuilder {
    slide_range: Option<SlideRange>,
    slide_image_refs: Vec<BlobRef>,
    ideal_script: Vec<ScriptExcerpt>,
    ideal_audio_refs: Vec<BlobRef>,
    user_audio_ref: Option<BlobRef>,
}

impl FourSourceBundleBuilder {
    pub fn slide_range(mut self, r: SlideRange) -> Self {
        self.slide_range = Some(r);
        self
    }
    pub fn slide_images(mut self, refs: Vec<BlobRef>) -> Self {
        self.slide_image_refs = refs;
        self
    }
    pub fn ideal_script(mut self, excerpts: Vec<ScriptExcerpt>) -> Self {
        self.ideal_script = excerpts;
        self
    }
    pub fn ideal_audio(mut self, refs: Vec<BlobRef>) -> Self {
        self.ideal_audio_refs = refs;
        self
    }
    pub fn user_audio(mut self, r: BlobRef) -> Self {
        self.user_audio_ref = Some(r);
        self
    }

    pub fn build(self) -> Result<FourSourceBundle, MissingSource> {
        if self.slide_image_refs.is_empty() {
            return Err(MissingSource::SlideImage);
        }
        if self.ideal_script.is_empty()
            || self.ideal_script.iter().all(|s| s.text.trim().is_empty())
        {
            return Err(MissingSource::IdealScript);
        }
        if self.ideal_audio_refs.is_empty() {
            return Err(MissingSource::IdealAudio);
        }
        let user_audio_ref = self.user_audio_ref.ok_or(MissingSource::UserAudio)?;
        let slide_range = self.slide_range.unwrap_or_else(|| {
            let first = self.ideal_script.first().map_or(1, |s| s.slide_index);
            let last = self.ideal_script.last().map_or(first, |s| s.slide_index);
            SlideRange {
                from_index: first,
                to_index: last,
            }
        });
        Ok(FourSourceBundle {
            slide_range,
            slide_image_refs: self.slide_image_refs,
            ideal_script: self.ideal_script,
            ideal_audio_refs: self.ideal_audio_refs,
            user_audio_ref,
        })
    }
}

impl FourSourceBundle {
    pub fn builder() -> FourSourceBundleBuilder {
        FourSourceBundleBuilder::default()
    }

    /// Sources for `practice`, restricted to its slide range through the
    /// exemplar's timeline manifest.
    pub fn from_exemplar(
        exemplar: &ExemplarArtifacts,
        practice: &PracticeRecording,
    ) -> Result<Self, AnalysisError> {
        let n = exemplar.deck.slide_count;
        let range = practice.slide_range.unwrap_or(SlideRange::all(n));
        range.check(n).map_err(AnalysisError::Invalid)?;
        let indices: Vec<usize> = exemplar
            .video
            .manifest
            .iter()
            .map(|e| e.slide_index)
            .filter(|&i| range.contains(i))
            .collect();
        let images = indices
            .iter()
            .filter_map(|&i| {
                exemplar
                    .deck
                    .slides
                    .get(i - 1)
                    .and_then(|s| s.image_ref.clone())
            })
            .collect::<Vec<_>>();
        let script = indices
            .iter()
            .filter_map(|&i| exemplar.script.segments.get(i - 1))
            .map(|s| ScriptExcerpt {
                slide_index: s.slide_index,
                text: s.text.clone(),
            })
            .collect::<Vec<_>>();
        let audio = indices
            .iter()
            .filter_map(|&i| exemplar.audio.iter().find(|a| a.slide_index == i))
            .map(|a| a.audio_ref.clone())
            .collect::<Vec<_>>();
        let mut b = Self::builder()
            .slide_range(range)
            .slide_images(if images.len() == indices.len() {
                images
            } else {
                Vec::new()
            })
            .ideal_script(script)
            .ideal_audio(if audio.len() == indices.len() {
                audio
            } else {
                Vec::new()
            });
        b = b.user_audio(practice.audio_ref.clone());
        Ok(b.build()?)
    }

    pub fn slide_range(&self) -> SlideRange {
        self.slide_range
    }
    pub fn slide_image_refs(&self) -> &[BlobRef] {
        &self.slide_image_refs
    }
    pub fn ideal_script(&self) -> &[ScriptExcerpt] {
        &self.ideal_script
    }
    pub fn ideal_audio_refs(&self) -> &[BlobRef] {
        &self.ideal_audio_refs
    }
    pub fn user_audio_ref(&self) -> &BlobRef {
        &self.user_audio_ref
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("missing {0}")]
    MissingSource(#[from] MissingSource),
    #[error("session is in stage {0}; analysis needs coaching")]
    WrongStage(Stage),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Sends all four sources plus the local metrics to the multimodal
/// provider. The verbatim reply is kept in the returned audit.
pub async fn run_multimodal_analysis(
    chain: &ProviderChain,
    blobs: &BlobStore,
    bundle: &FourSourceBundle,
    metrics: Option<&DeliveryMetrics>,
) -> Result<(String, OutcomeAudit), AnalysisError> {
    let load = |refs: &[BlobRef]| -> Result<Vec<Bytes>, StoreError> {
        refs.iter().map(|r| blobs.get(r).map(Bytes)).collect()
    };
    let mut delivery = AnalyzeDelivery::new(
        load(bundle.slide_image_refs())?,
        bundle.ideal_script().to_vec(),
        load(bundle.ideal_audio_refs())?,
        Bytes(blobs.get(bundle.user_audio_ref())?),
        ANALYSIS_INSTRUCTIONS.to_string(),
    )?;
    delivery.metrics = metrics.cloned();
    let req = ProviderRequest::AnalyzeDelivery(delivery);
    let outcome = chain.invoke(&req).await?;
    let mut audit = outcome.audit(chain.capability());
    let text = outcome.payload.into_text().unwrap_or_default();
    audit.raw_response = Some(text.clone());
    if text.trim().is_empty() {
        return Err(AnalysisError::Invalid(
            "multimodal analysis returned no text".into(),
        ));
    }
    Ok((text, audit))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureMarker {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub id: String,
    pub session_id: String,
    pub practice_id: String,
    pub inputs: FourSourceBundle,
    pub metrics: Option<DeliveryMetrics>,
    pub transcript_ref: Option<BlobRef>,
    pub raw_analysis: Option<String>,
    pub audience_notes: Vec<AudienceNote>,
    pub feedback: Option<OisFeedback>,
    pub created_at: DateTime<Utc>,
    pub provider_outcomes: Vec<OutcomeAudit>,
    /// Non-fatal problems, such as audience simulation being skipped.
    pub warnings: Vec<String>,
    /// Set when a stage failed; later fields are then absent.
    pub failure: Option<FailureMarker>,
}

impl AnalysisReport {
    pub fn new(session_id: &str, practice_id: &str, inputs: FourSourceBundle) -> Self {
        Self {
            id: new_id(),
            session_id: session_id.into(),
            practice_id: practice_id.into(),
            inputs,
            metrics: None,
            transcript_ref: None,
            raw_analysis: None,
            audience_notes: Vec::new(),
            feedback: None,
            created_at: Utc::now(),
            provider_outcomes: Vec::new(),
            warnings: Vec::new(),
            failure: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.feedback.is_some() && self.metrics.is_some()
    }

    fn fail(&mut self, step: usize, message: String) {
        self.failure = Some(FailureMarker {
            stage: ANALYSIS_STEPS[step].to_string(),
            message,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoachSettings {
    pub filler_lexicon: FillerLexicon,
    pub pause: PauseParams,
}

impl Default for CoachSettings {
    fn default() -> Self {
        Self {
            filler_lexicon: FillerLexicon::default(),
            pause: PauseParams::default(),
        }
    }
}

pub struct CoachContext<'a> {
    pub store: &'a Store,
    pub providers: &'a Providers,
    pub settings: &'a CoachSettings,
}

fn persist(store: &Store, report: &AnalysisReport) -> Result<(), StoreError> {
    let record = store.blobs().put_json(report)?;
    store.attach_artifact(
        &report.session_id,
        Attachment::Analysis(AnalysisRef {
            id: report.id.clone(),
            practice_id: report.practice_id.clone(),
            record,
        }),
    )?;
    Ok(())
}

/// Transcription, metrics, multimodal analysis, audience simulation and
/// feedback, in that order. A failing stage still persists the report with
/// a failure marker; the recording itself is never touched.
pub async fn analyze_practice(
    ctx: &CoachContext<'_>,
    session_id: &str,
    practice_id: &str,
    progress: &dyn Progress,
) -> Result<AnalysisReport, AnalysisError> {
    let session = ctx.store.load_session(session_id)?;
    if session.stage != Stage::Coaching {
        return Err(AnalysisError::WrongStage(session.stage));
    }
    let exemplar_ref = session
        .exemplar_ref
        .as_ref()
        .ok_or_else(|| AnalysisError::Invalid("no exemplar".into()))?;
    let practice_ref = session
        .practice_refs
        .iter()
        .find(|p| p.id == practice_id)
        .ok_or_else(|| StoreError::NotFound(format!("practice {practice_id}")))?;
    let blobs = ctx.store.blobs();
    let practice: PracticeRecording = blobs.get_json(&practice_ref.record)?;
    let exemplar: ExemplarArtifacts = blobs.get_json(exemplar_ref)?;
    let bundle = FourSourceBundle::from_exemplar(&exemplar, &practice)?;
    let mut report = AnalysisReport::new(session_id, practice_id, bundle);
    let user_audio = blobs.get(&practice.audio_ref)?;

    // 1. transcription
    progress.started(0);
    let transcript = match ctx
        .providers
        .asr
        .invoke(&ProviderRequest::Transcribe {
            audio: Bytes(user_audio.clone()),
        })
        .await
    {
        Ok(outcome) => {
            report
                .provider_outcomes
                .push(outcome.audit(ctx.providers.asr.capability()));
            match outcome.payload {
                crate::providers::ProviderPayload::Transcript(t) => {
                    Transcript::from_words(t.words).map_err(|e| format!("transcript rejected: {e}"))
                }
                crate::providers::ProviderPayload::Text(t) => {
                    Ok(Transcript::evenly_spaced(&t, practice.duration_ms))
                }
                other => Err(format!("ASR returned {}", other.kind())),
            }
        }
        Err(e) => Err(e.to_string()),
    };
    let transcript = match transcript {
        Ok(t) => t,
        Err(message) => {
            report.fail(0, message);
            persist(ctx.store, &report)?;
            return Ok(report);
        }
    };
    report.transcript_ref = Some(blobs.put_json(&transcript)?);
    progress.finished(0, Some(format!("{} words", transcript.words.len())));

    // 2. metrics
    progress.started(1);
    let ideal_ms = {
        let r = report.inputs.slide_range();
        let spans: Vec<_> = exemplar
            .video
            .manifest
            .iter()
            .filter(|e| r.contains(e.slide_index))
            .collect();
        spans
            .first()
            .zip(spans.last())
            .map(|(a, b)| b.end_ms - a.start_ms)
    };
    match compute_delivery_metrics(
        &transcript,
        &user_audio,
        &ctx.settings.filler_lexicon,
        &ctx.settings.pause,
        ideal_ms,
    ) {
        Ok(m) => {
            progress.finished(1, Some(m.summary_line()));
            report.metrics = Some(m);
        }
        Err(e) => {
            report.fail(1, e.to_string());
            persist(ctx.store, &report)?;
            return Ok(report);
        }
    }

    // 3. multimodal analysis
    progress.started(2);
    match run_multimodal_analysis(
        &ctx.providers.mllm_analysis,
        blobs,
        &report.inputs,
        report.metrics.as_ref(),
    )
    .await
    {
        Ok((text, audit)) => {
            report.provider_outcomes.push(audit);
            report.raw_analysis = Some(text);
            progress.finished(2, None);
        }
        Err(e) => {
            if let AnalysisError::Provider(p) = &e {
                report
                    .warnings
                    .extend(p.log().iter().filter_map(|a| a.error.clone()));
            }
            report.fail(2, e.to_string());
            persist(ctx.store, &report)?;
            return Ok(report);
        }
    }

    // 4. audience simulation; failure degrades rather than aborts
    progress.started(3);
    let profile = if session.user_prompt.trim().is_empty() {
        DEFAULT_AUDIENCE.to_string()
    } else {
        session.user_prompt.clone()
    };
    match simulate_audience(
        &ctx.providers.mllm_analysis,
        Some(&user_audio),
        &transcript.full_text,
        &profile,
    )
    .await
    {
        Ok(out) => {
            report.provider_outcomes.extend(out.audits);
            report.warnings.extend(out.repairs);
            report.audience_notes = out.notes;
            progress.finished(3, Some(format!("{} notes", report.audience_notes.len())));
        }
        Err(e) => {
            if let AudienceError::Unparseable { audits, .. } = &e {
                report.provider_outcomes.extend(audits.iter().cloned());
            }
            let msg = format!("audience simulation skipped: {e}");
            report.warnings.push(msg.clone());
            progress.finished(3, Some(msg));
        }
    }

    // 5. feedback
    progress.started(4);
    let raw = report.raw_analysis.clone().unwrap_or_default();
    match compose_feedback(
        &ctx.providers.llm_chat,
        &raw,
        report.metrics.as_ref(),
        &report.audience_notes,
    )
    .await
    {
        Ok((fb, audits)) => {
            report.provider_outcomes.extend(audits);
            report.feedback = Some(fb);
            progress.finished(4, None);
        }
        Err(e) => {
            if let FeedbackError::Rejected { audits, .. } = &e {
                report.provider_outcomes.extend(audits.iter().cloned());
            }
            report.fail(4, e.to_string());
        }
    }
    persist(ctx.store, &report)?;
    Ok(report)
}
