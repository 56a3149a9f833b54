//! Capability request and response payloads. These types are the JSON wire
//! format for HTTP providers.

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use super::Capability;
use crate::coach::{AudienceNote, DeliveryMetrics, MissingSource, Transcript};

/// Binary payload. On the wire: `{"b64": "<standard base64>"}`.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Bytes(pub Vec<u8>);

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bytes({} bytes)", self.0.len())
    }
}

impl From<Vec<u8>> for Bytes {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

#[derive(Serialize, Deserialize)]
struct B64Wire {
    b64: String,
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        B64Wire {
            b64: base64::engine::general_purpose::STANDARD.encode(&self.0),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = B64Wire::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(w.b64)
            .map(Bytes)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrateSlide {
    pub slide_index: usize,
    pub slide_count: usize,
    pub image_png: Bytes,
    pub slide_text: String,
    pub notes: Option<String>,
    pub user_prompt: String,
    pub instructions: String,
    /// Closing sentences of the previous slide's narration.
    pub previous_tail: Option<String>,
    /// Set on regeneration attempts.
    pub correction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizeSpeech {
    pub slide_index: usize,
    pub text: String,
    pub reference_audio: Option<Bytes>,
    pub reference_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptExcerpt {
    pub slide_index: usize,
    pub text: String,
}

/// All four analysis sources, loaded. Built only through [`AnalyzeDelivery::new`]
/// (or deserialization, which runs the same checks), so a request missing
/// a source cannot be sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnalyzeDeliveryWire")]
pub struct AnalyzeDelivery {
    slide_images: Vec<Bytes>,
    ideal_script: Vec<ScriptExcerpt>,
    ideal_audio: Vec<Bytes>,
    user_audio: Bytes,
    pub metrics: Option<DeliveryMetrics>,
    pub instructions: String,
}

#[derive(Deserialize)]
struct AnalyzeDeliveryWire {
    #[serde(default)]
    slide_images: Vec<Bytes>,
    #[serde(default)]
    ideal_script: Vec<ScriptExcerpt>,
    #[serde(default)]
    ideal_audio: Vec<Bytes>,
    #[serde(default)]
    user_audio: Bytes,
    #[serde(default)]
    metrics: Option<DeliveryMetrics>,
    #[serde(default)]
    instructions: String,
}

impl TryFrom<AnalyzeDeliveryWire> for AnalyzeDelivery {
    type Error = MissingSource;

    fn try_from(w: AnalyzeDeliveryWire) -> Result<Self, MissingSource> {
        let mut r = Self::new(
            w.slide_images,
            w.ideal_script,
            w.ideal_audio,
            w.user_audio,
            w.instructions,
        )?;
        r.metrics = w.metrics;
        Ok(r)
    }
}

impl AnalyzeDelivery {
    /// Rejects an empty source, naming the first one missing.
    pub fn new(
        slide_images: Vec<Bytes>,
        ideal_script: Vec<ScriptExcerpt>,
        ideal_audio: Vec<Bytes>,
        user_audio: Bytes,
        instructions: String,
    ) -> Result<Self, MissingSource> {
        if slide_images.is_empty() || slide_images.iter().any(|b| b.0.is_empty()) {
            return Err(MissingSource::SlideImage);
        }
        if ideal_script.iter().all(|s| s.text.trim().is_empty()) {
            return Err(MissingSource::IdealScript);
        }
        if ideal_audio.is_empty() || ideal_audio.iter().any(|b| b.0.is_empty()) {
            return Err(MissingSource::IdealAudio);
        }
        if user_audio.0.is_empty() {
            return Err(MissingSource::UserAudio);
        }
        Ok(Self {
            slide_images,
            ideal_script,
            ideal_audio,
            user_audio,
            metrics: None,
            instructions,
        })
    }

    pub fn slide_images(&self) -> &[Bytes] {
        &self.slide_images
    }
    pub fn ideal_script(&self) -> &[ScriptExcerpt] {
        &self.ideal_script
    }
    pub fn ideal_audio(&self) -> &[Bytes] {
        &self.ideal_audio
    }
    pub fn user_audio(&self) -> &Bytes {
        &self.user_audio
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateAudience {
    pub audience_profile: String,
    pub transcript: String,
    pub audio: Option<Bytes>,
    pub instructions: String,
    pub repair: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeFeedback {
    pub raw_analysis: String,
    pub metrics: Option<DeliveryMetrics>,
    pub audience_notes: Vec<AudienceNote>,
    pub instructions: String,
    pub correction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ProviderRequest {
    NarrateSlide(NarrateSlide),
    Synthesize(SynthesizeSpeech),
    Transcribe { audio: Bytes },
    AnalyzeDelivery(AnalyzeDelivery),
    SimulateAudience(SimulateAudience),
    ComposeFeedback(ComposeFeedback),
    Chat(ChatRequest),
}

impl ProviderRequest {
    pub fn task(&self) -> &'static str {
        match self {
            Self::NarrateSlide(_) => "narrate_slide",
            Self::Synthesize(_) => "synthesize",
            Self::Transcribe { .. } => "transcribe",
            Self::AnalyzeDelivery(_) => "analyze_delivery",
            Self::SimulateAudience(_) => "simulate_audience",
            Self::ComposeFeedback(_) => "compose_feedback",
            Self::Chat(_) => "chat",
        }
    }

    /// Checks that the request carries what `capability` needs.
    pub fn validate_for(&self, capability: Capability) -> Result<(), String> {
        use Capability::*;
        match (capability, self) {
            (VlmScript, Self::NarrateSlide(r)) => {
                if r.image_png.0.is_empty() {
                    return Err("slide image is empty".into());
                }
            }
            (TtsClone, Self::Synthesize(r)) => {
                if r.text.trim().is_empty() {
                    return Err("text to synthesize is empty".into());
                }
                if r.reference_audio.as_ref().is_none_or(|a| a.0.is_empty()) {
                    return Err("voice cloning needs a reference sample".into());
                }
                if r.reference_text.as_deref().is_none_or(str::is_empty) {
                    return Err("voice cloning needs the reference text".into());
                }
            }
            (TtsStandard, Self::Synthesize(r)) => {
                if r.text.trim().is_empty() {
                    return Err("text to synthesize is empty".into());
                }
            }
            (Asr, Self::Transcribe { audio }) => {
                if audio.0.is_empty() {
                    return Err("audio is empty".into());
                }
            }
            (MllmAnalysis, Self::AnalyzeDelivery(_))
            | (MllmAnalysis, Self::SimulateAudience(_))
            | (LlmChat, Self::ComposeFeedback(_))
            | (LlmChat, Self::Chat(_)) => {}
            (cap, req) => {
                return Err(format!("{} request is not valid for {cap}", req.task()));
            }
        }
        Ok(())
    }
}

/// Whole-message provider response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderPayload {
    Text(String),
    Audio(Bytes),
    Transcript(Transcript),
}

impl ProviderPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Text(_) => "text",
            Self::Audio(_) => "audio",
            Self::Transcript(_) => "transcript",
        }
    }

    pub fn into_text(self) -> Option<String> {
        match self {
            Self::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn into_audio(self) -> Option<Vec<u8>> {
        match self {
            Self::Audio(b) => Some(b.0),
            _ => None,
        }
    }

    pub fn into_transcript(self) -> Option<Transcript> {
        match self {
            Self::Transcript(t) => Some(t),
            _ => None,
        }
    }
}
