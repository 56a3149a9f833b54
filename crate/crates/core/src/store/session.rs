use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::blob::BlobRef;

pub const SCHEMA_VERSION: u32 = 1;

/// Where a session sits in the setup → generating → coaching journey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Generating,
    Coaching,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "setup",
            Stage::Generating => "generating",
            Stage::Coaching => "coaching",
        })
    }
}

impl Stage {
    pub fn can_transition_to(self, target: Stage) -> bool {
        matches!(
            (self, target),
            (Stage::Setup, Stage::Generating)
                | (Stage::Generating, Stage::Coaching)
                | (Stage::Generating, Stage::Setup)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Coach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_analysis: Option<String>,
    /// Set on a user message whose coach reply could not be produced.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub delivery_failed: bool,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
            timestamp,
            linked_analysis: None,
            delivery_failed: false,
        }
    }

    pub fn coach(content: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            role: Role::Coach,
            content: content.into(),
            timestamp,
            linked_analysis: None,
            delivery_failed: false,
        }
    }
}

/// A practice recording attached to a session; `record` points at the
/// serialized `PracticeRecording`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeRef {
    pub id: String,
    pub record: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRef {
    pub id: String,
    pub practice_id: String,
    pub record: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub stage: Stage,
    #[serde(default)]
    pub user_prompt: String,
    pub deck_ref: Option<BlobRef>,
    pub voice_profile_ref: Option<BlobRef>,
    pub exemplar_ref: Option<BlobRef>,
    /// Exemplars replaced by a later generation. Their blobs are kept.
    #[serde(default)]
    pub retired_exemplars: Vec<BlobRef>,
    #[serde(default)]
    pub practice_refs: Vec<PracticeRef>,
    #[serde(default)]
    pub analysis_refs: Vec<AnalysisRef>,
    #[serde(default)]
    pub chat_history: Vec<ChatMessage>,
    #[serde(default)]
    pub deleted: bool,
}

impl Session {
    pub fn new(id: String, user_prompt: String, created_at: DateTime<Utc>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id,
            created_at,
            stage: Stage::Setup,
            user_prompt,
            deck_ref: None,
            voice_profile_ref: None,
            exemplar_ref: None,
            retired_exemplars: Vec::new(),
            practice_refs: Vec::new(),
            analysis_refs: Vec::new(),
            chat_history: Vec::new(),
            deleted: false,
        }
    }

    /// Every structural invariant a persisted session must satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {}",
                self.schema_version
            ));
        }
        if self.stage == Stage::Generating
            && (self.deck_ref.is_none() || self.voice_profile_ref.is_none())
        {
            return Err("stage generating requires deck and voice profile".into());
        }
        if self.stage == Stage::Coaching && self.exemplar_ref.is_none() {
            return Err("stage coaching requires an exemplar".into());
        }
        for a in &self.analysis_refs {
            if !self.practice_refs.iter().any(|p| p.id == a.practice_id) {
                return Err(format!(
                    "analysis {} references unknown practice {}",
                    a.id, a.practice_id
                ));
            }
        }
        if self
            .chat_history
            .windows(2)
            .any(|w| w[1].timestamp < w[0].timestamp)
        {
            return Err("chat history timestamps decrease".into());
        }
        if self.chat_history.iter().any(|m| m.content.is_empty()) {
            return Err("empty chat message".into());
        }
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            created_at: self.created_at,
            stage: self.stage,
            user_prompt: self.user_prompt.clone(),
            practice_count: self.practice_refs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub stage: Stage,
    pub user_prompt: String,
    pub practice_count: usize,
}

/// Something that can be hung off a session.
#[derive(Debug, Clone)]
pub enum Attachment {
    Deck(BlobRef),
    VoiceProfile(BlobRef),
    Exemplar(BlobRef),
    Practice(PracticeRef),
    Analysis(AnalysisRef),
}

impl Attachment {
    pub fn kind(&self) -> &'static str {
        match self {
            Attachment::Deck(_) => "deck",
            Attachment::VoiceProfile(_) => "voice_profile",
            Attachment::Exemplar(_) => "exemplar",
            Attachment::Practice(_) => "practice",
            Attachment::Analysis(_) => "analysis",
        }
    }

    pub fn allowed_stage(&self) -> Stage {
        match self {
            Attachment::Deck(_) | Attachment::VoiceProfile(_) => Stage::Setup,
            Attachment::Exemplar(_) => Stage::Generating,
            Attachment::Practice(_) | Attachment::Analysis(_) => Stage::Coaching,
        }
    }
}
