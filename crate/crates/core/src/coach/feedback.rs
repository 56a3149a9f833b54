//! Observation / Impact / Suggestion feedback and its validator.

use serde::{Deserialize, Serialize};

use super::audience::extract_json;
use super::{AudienceNote, DeliveryMetrics};
use crate::providers::request::ComposeFeedback;
use crate::providers::{OutcomeAudit, ProviderChain, ProviderError, ProviderRequest};
use crate::text::count_words;

/// Inclusive cap on the combined observation, impact and suggestion.
pub const MAX_OIS_WORDS: usize = 150;

/// Unvalidated feedback as a provider emits it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OisCandidate {
    #[serde(default)]
    pub encouragement: Option<String>,
    #[serde(default)]
    pub observation: Option<String>,
    #[serde(default)]
    pub impact: Option<String>,
    #[serde(default)]
    pub suggestion: Option<String>,
}

impl OisCandidate {
    pub fn new(encouragement: &str, observation: &str, impact: &str, suggestion: &str) -> Self {
        Self {
            encouragement: Some(encouragement.into()),
            observation: Some(observation.into()),
            impact: Some(impact.into()),
            suggestion: Some(suggestion.into()),
        }
    }

    fn ois_words(&self) -> usize {
        [&self.observation, &self.impact, &self.suggestion]
            .iter()
            .map(|f| f.as_deref().map_or(0, count_words))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OisViolation {
    Missing { field: String },
    Empty { field: String },
    TooLong { words: usize, max: usize },
}

impl std::fmt::Display for OisViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Missing { field } => write!(f, "field {field} is missing"),
            Self::Empty { field } => write!(f, "field {field} is empty"),
            Self::TooLong { words, max } => write!(
                f,
                "observation, impact and suggestion total {words} words; the limit is {max}"
            ),
        }
    }
}

pub fn validate_ois(candidate: &OisCandidate) -> Result<(), Vec<OisViolation>> {
    let mut violations = Vec::new();
    for (name, value) in [
        ("encouragement", &candidate.encouragement),
        ("observation", &candidate.observation),
        ("impact", &candidate.impact),
        ("suggestion", &candidate.suggestion),
    ] {
        match value {
            None => violations.push(OisViolation::Missing { field: name.into() }),
            Some(v) if v.trim().is_empty() => {
                violations.push(OisViolation::Empty { field: name.into() })
            }
            Some(_) => {}
        }
    }
    let words = candidate.ois_words();
    if words > MAX_OIS_WORDS {
        violations.push(OisViolation::TooLong {
            words,
            max: MAX_OIS_WORDS,
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Feedback that passed [`validate_ois`]. Only constructible through
/// validation, including when deserialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "OisWire")]
pub struct OisFeedback {
    encouragement: String,
    observation: String,
    impact: String,
    suggestion: String,
    ois_word_count: usize,
}

#[derive(Deserialize)]
struct OisWire {
    encouragement: Option<String>,
    observation: Option<String>,
    impact: Option<String>,
    suggestion: Option<String>,
}

impl TryFrom<OisWire> for OisFeedback {
    type Error = String;

    fn try_from(w: OisWire) -> Result<Self, String> {
        OisFeedback::new(OisCandidate {
            encouragement: w.encouragement,
            observation: w.observation,
            impact: w.impact,
            suggestion: w.suggestion,
        })
        .map_err(|v| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        })
    }
}

impl TryFrom<OisCandidate> for OisFeedback {
    type Error = Vec<OisViolation>;

    fn try_from(c: OisCandidate) -> Result<Self, Self::Error> {
        Self::new(c)
    }
}

impl OisFeedback {
    pub fn new(candidate: OisCandidate) -> Result<Self, Vec<OisViolation>> {
        validate_ois(&candidate)?;
        let ois_word_count = candidate.ois_words();
        let take = |f: Option<String>| f.unwrap_or_default().trim().to_string();
        Ok(Self {
            encouragement: take(candidate.encouragement),
            observation: take(candidate.observation),
            impact: take(candidate.impact),
            suggestion: take(candidate.suggestion),
            ois_word_count,
        })
    }

    pub fn encouragement(&self) -> &str {
        &self.encouragement
    }
    pub fn observation(&self) -> &str {
        &self.observation
    }
    pub fn impact(&self) -> &str {
        &self.impact
    }
    pub fn suggestion(&self) -> &str {
        &self.suggestion
    }
    pub fn ois_word_count(&self) -> usize {
        self.ois_word_count
    }

    pub fn to_candidate(&self) -> OisCandidate {
        OisCandidate::new(
            &self.encouragement,
            &self.observation,
            &self.impact,
            &self.suggestion,
        )
    }
}

pub const FEEDBACK_INSTRUCTIONS: &str = "Write coaching feedback for this practice run. \
Reply with a JSON object with string fields encouragement, observation, impact and suggestion. \
Begin with sincere encouragement about a real strength. Then give one observation of an area to improve, \
its impact on the presentation, and one concrete suggestion. Observation, impact and suggestion together \
must stay within 150 words. Ground numeric claims in the supplied metrics.";

#[derive(Debug, thiserror::Error)]
pub enum FeedbackError {
    #[error("raw analysis is empty")]
    NoAnalysis,
    #[error("feedback rejected twice: {}", .violations.join("; "))]
    Rejected {
        /// Both rejected replies, in order.
        drafts: Vec<String>,
        violations: Vec<String>,
        audits: Vec<OutcomeAudit>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn parse_candidate(text: &str) -> Result<OisCandidate, Vec<String>> {
    let v = extract_json(text).ok_or_else(|| vec!["reply contains no JSON object".to_string()])?;
    let candidate: OisCandidate = serde_json::from_value(v)
        .map_err(|e| vec![format!("reply does not match the schema: {e}")])?;
    validate_ois(&candidate)
        .map_err(|vs| vs.iter().map(ToString::to_string).collect::<Vec<_>>())?;
    Ok(candidate)
}

/// Prompts for OIS feedback; a rejected reply gets one corrective prompt
/// naming the violations, and a second rejection is an error.
pub async fn compose_feedback(
    chain: &ProviderChain,
    raw_analysis: &str,
    metrics: Option<&DeliveryMetrics>,
    audience_notes: &[AudienceNote],
) -> Result<(OisFeedback, Vec<OutcomeAudit>), FeedbackError> {
    if raw_analysis.trim().is_empty() {
        return Err(FeedbackError::NoAnalysis);
    }
    let mut audits = Vec::new();
    let mut drafts = Vec::new();
    let mut correction: Option<String> = None;
    let mut last_violations = Vec::new();
    for _ in 0..2 {
        let req = ProviderRequest::ComposeFeedback(ComposeFeedback {
            raw_analysis: raw_analysis.to_string(),
            metrics: metrics.cloned(),
            audience_notes: audience_notes.to_vec(),
            instructions: FEEDBACK_INSTRUCTIONS.to_string(),
            correction: correction.clone(),
        });
        let outcome = chain.invoke(&req).await?;
        let mut audit = outcome.audit(chain.capability());
        let text = outcome.payload.into_text().unwrap_or_default();
        audit.raw_response = Some(text.clone());
        audits.push(audit);
        match parse_candidate(&text) {
            Ok(c) => {
                let fb = OisFeedback::new(c).expect("candidate already validated");
                return Ok((fb, audits));
            }
            Err(violations) => {
                correction = Some(format!(
                    "Your previous reply was rejected: {}. Fix these problems and reply with the JSON object only.",
                    violations.join("; ")
                ));
                drafts.push(text);
                last_violations = violations;
            }
        }
    }
    Err(FeedbackError::Rejected {
        drafts,
        violations: last_violations,
        audits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{make_stub, Capability, ProviderPayload, StubStep};

    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    fn cand(o: usize, i: usize, s: usize) -> OisCandidate {
        OisCandidate::new("Strong opening.", &words(o), &words(i), &words(s))
    }

    #[test]
    fn boundary_is_inclusive() {
        assert!(validate_ois(&cand(50, 50, 50)).is_ok());
        let err = validate_ois(&cand(50, 50, 51)).unwrap_err();
        assert_eq!(
            err,
            vec![OisViolation::TooLong {
                words: 151,
                max: 150
            }]
        );
    }

    #[test]
    fn encouragement_does_not_count_toward_limit() {
        let mut c = cand(50, 50, 50);
        c.encouragement = Some(words(80));
        assert!(validate_ois(&c).is_ok());
    }

    #[test]
    fn missing_and_empty_fields_are_named() {
        let mut c = cand(5, 5, 5);
        c.impact = None;
        c.encouragement = Some("   ".into());
        let err = validate_ois(&c).unwrap_err();
        assert!(err.contains(&OisViolation::Missing {
            field: "impact".into()
        }));
        assert!(err.contains(&OisViolation::Empty {
            field: "encouragement".into()
        }));
    }

    #[test]
    fn deserialization_validates() {
        let ok: OisFeedback = serde_json::from_value(serde_json::json!({
            "encouragement": "e", "observation": "o", "impact": "i", "suggestion": "s", "ois_word_count": 3
        }))
        .unwrap();
        assert_eq!(ok.ois_word_count(), 3);
        let bad = serde_json::from_value::<OisFeedback>(serde_json::json!({
            "encouragement": "", "observation": "o", "impact": "i", "suggestion": "s"
        }));
        assert!(bad.is_err());
    }

    fn json_reply(c: &OisCandidate) -> StubStep {
        StubStep::Reply(ProviderPayload::Text(serde_json::to_string(c).unwrap()))
    }

    #[tokio::test]
    async fn corrected_on_second_attempt() {
        let stub = make_stub(
            Capability::LlmChat,
            "llm",
            vec![json_reply(&cand(60, 50, 50)), json_reply(&cand(50, 45, 45))],
        );
        let chain = ProviderChain::single(stub.clone(), 0);
        let (fb, audits) = compose_feedback(&chain, "analysis", None, &[])
            .await
            .unwrap();
        assert_eq!(fb.ois_word_count(), 140);
        assert_eq!(audits.len(), 2);
        match &stub.calls()[1].request {
            ProviderRequest::ComposeFeedback(r) => {
                assert!(r.correction.as_deref().unwrap().contains("160 words"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[tokio::test]
    async fn two_rejections_carry_both_drafts() {
        let mut c = cand(10, 10, 10);
        c.encouragement = Some(String::new());
        let stub = make_stub(
            Capability::LlmChat,
            "llm",
            vec![json_reply(&c), json_reply(&c)],
        );
        let chain = ProviderChain::single(stub, 0);
        match compose_feedback(&chain, "analysis", None, &[]).await {
            Err(FeedbackError::Rejected { drafts, .. }) => assert_eq!(drafts.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
