//! Audience-perspective reactions predicted by the multimodal provider.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::providers::request::SimulateAudience;
use crate::providers::{Bytes, OutcomeAudit, ProviderChain, ProviderError, ProviderRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engagement {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comprehension {
    Confused,
    Partial,
    Clear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudienceNote {
    pub audience_profile: String,
    pub engagement: Engagement,
    pub comprehension: Comprehension,
    pub confusion_points: Vec<String>,
    pub reaction_summary: String,
}

pub const AUDIENCE_INSTRUCTIONS: &str = "Listen to the talk as the audience described below. \
Reply with JSON only: {\"engagement\": \"low|medium|high\", \"comprehension\": \"confused|partial|clear\", \
\"confusion_points\": [\"...\"], \"reaction_summary\": \"...\"}. A list of such objects is also accepted.";

fn coerce_engagement(s: &str) -> Option<Engagement> {
    match s.trim().to_lowercase().as_str() {
        "low" | "bored" | "disengaged" => Some(Engagement::Low),
        "medium" | "moderate" | "mid" | "average" => Some(Engagement::Medium),
        "high" | "engaged" | "very high" => Some(Engagement::High),
        _ => None,
    }
}

fn coerce_comprehension(s: &str) -> Option<Comprehension> {
    match s.trim().to_lowercase().as_str() {
        "confused" | "low" | "poor" | "none" => Some(Comprehension::Confused),
        "partial" | "partially" | "medium" | "moderate" | "some" => Some(Comprehension::Partial),
        "clear" | "high" | "full" | "good" => Some(Comprehension::Clear),
        _ => None,
    }
}

/// First JSON value embedded in `text`, tolerating prose or code fences
/// around it.
pub fn extract_json(text: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(text.trim()) {
        return Some(v);
    }
    text.char_indices()
        .filter(|(_, c)| *c == '{' || *c == '[')
        .find_map(|(i, _)| {
            serde_json::Deserializer::from_str(&text[i..])
                .into_iter::<Value>()
                .next()
                .and_then(Result::ok)
        })
}

/// Parses one note, repairing the confusion/comprehension invariant.
/// Returns the note and a description of any repair made.
fn parse_note(v: &Value, profile: &str) -> Result<(AudienceNote, Option<String>), String> {
    let obj = v.as_object().ok_or("note is not an object")?;
    let field = |k: &str| obj.get(k).and_then(Value::as_str);
    let engagement = field("engagement")
        .and_then(coerce_engagement)
        .ok_or_else(|| {
            format!(
                "engagement {:?} is not low/medium/high",
                obj.get("engagement")
            )
        })?;
    let mut comprehension = field("comprehension")
        .and_then(coerce_comprehension)
        .ok_or_else(|| {
            format!(
                "comprehension {:?} is not confused/partial/clear",
                obj.get("comprehension")
            )
        })?;
    let confusion_points: Vec<String> = match obj.get("confusion_points") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(str::trim)
                    .map(str::to_string)
                    .ok_or("confusion point is not text")
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect(),
        Some(Value::String(s)) if s.trim().is_empty() => Vec::new(),
        Some(Value::String(s)) => vec![s.trim().to_string()],
        Some(_) => return Err("confusion_points is not a list".into()),
    };
    let reaction_summary = field("reaction_summary").unwrap_or("").trim().to_string();
    let mut repair = None;
    if comprehension == Comprehension::Clear && !confusion_points.is_empty() {
        comprehension = Comprehension::Partial;
        repair = Some(
            "comprehension lowered from clear to partial because confusion points were listed"
                .into(),
        );
    }
    let audience_profile = field("audience_profile")
        .filter(|s| !s.trim().is_empty())
        .unwrap_or(profile)
        .to_string();
    Ok((
        AudienceNote {
            audience_profile,
            engagement,
            comprehension,
            confusion_points,
            reaction_summary,
        },
        repair,
    ))
}

/// Notes from a provider reply: an object, a list of objects, or an
/// object with a `notes` list.
pub fn parse_notes(text: &str, profile: &str) -> Result<(Vec<AudienceNote>, Vec<String>), String> {
    let v = extract_json(text).ok_or("reply contains no JSON")?;
    let items = match &v {
        Value::Array(items) => items.clone(),
        Value::Object(o) => match o.get("notes") {
            Some(Value::Array(items)) => items.clone(),
            _ => vec![v.clone()],
        },
        _ => return Err("reply is not an object or list".into()),
    };
    if items.is_empty() {
        return Err("reply contains no notes".into());
    }
    let mut notes = Vec::new();
    let mut repairs = Vec::new();
    for item in &items {
        let (note, repair) = parse_note(item, profile)?;
        notes.push(note);
        repairs.extend(repair);
    }
    Ok((notes, repairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudienceOutcome {
    pub notes: Vec<AudienceNote>,
    pub repairs: Vec<String>,
    pub audits: Vec<OutcomeAudit>,
}

#[derive(Debug, thiserror::Error)]
pub enum AudienceError {
    #[error("audience profile is empty")]
    EmptyProfile,
    #[error("audience reply unusable after a repair request: {reason}")]
    Unparseable {
        reason: String,
        audits: Vec<OutcomeAudit>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Asks the provider how `profile` would receive the talk. Audio is sent
/// only when the primary provider accepts it. An unusable reply gets one
/// repair request quoting the parse problem.
pub async fn simulate_audience(
    chain: &ProviderChain,
    audio: Option<&[u8]>,
    transcript: &str,
    profile: &str,
) -> Result<AudienceOutcome, AudienceError> {
    if profile.trim().is_empty() {
        return Err(AudienceError::EmptyProfile);
    }
    let audio = audio
        .filter(|_| chain.primary_accepts_audio())
        .map(|a| Bytes(a.to_vec()));
    let mut audits = Vec::new();
    let mut repair: Option<String> = None;
    for _ in 0..2 {
        let req = ProviderRequest::SimulateAudience(SimulateAudience {
            audience_profile: profile.to_string(),
            transcript: transcript.to_string(),
            audio: audio.clone(),
            instructions: AUDIENCE_INSTRUCTIONS.to_string(),
            repair: repair.clone(),
        });
        let outcome = chain.invoke(&req).await?;
        let mut audit = outcome.audit(chain.capability());
        let text = match outcome.payload.into_text() {
            Some(t) => t,
            None => {
                audits.push(audit);
                repair = Some("Reply with JSON text, not another payload type.".into());
                continue;
            }
        };
        audit.raw_response = Some(text.clone());
        audits.push(audit);
        match parse_notes(&text, profile) {
            Ok((notes, repairs)) => {
                return Ok(AudienceOutcome {
                    notes,
                    repairs,
                    audits,
                })
            }
            Err(reason) => {
                if repair.is_some() {
                    return Err(AudienceError::Unparseable { reason, audits });
                }
                repair = Some(format!(
                    "Your previous reply could not be used ({reason}). Reply with the JSON object only."
                ));
            }
        }
    }
    Err(AudienceError::Unparseable {
        reason: "no text reply".into(),
        audits,
    })
}
