//! Deterministic offline providers selected with `stub://<behaviour>`
//! endpoints. Behaviour is `default` optionally followed by query
//! parameters:
//!
//! - `words=N` narration length per slide (default 80)
//! - `base_ms=N`, `ms_per_word=N` synthesized duration (default 1000, 25)
//! - `fail=transient|permanent` make calls fail
//! - `fail_slides=2,3` restrict `fail` to requests for those slides
//! - `delay_ms=N` sleep before answering

use async_trait::async_trait;
use serde_json::json;
use std::time::Duration;

use super::request::{
    AnalyzeDelivery, ChatRequest, ComposeFeedback, NarrateSlide, SimulateAudience,
};
use super::{Bytes, CallError, Capability, Provider, ProviderPayload, ProviderRequest};
use crate::audio::{synth, wav};
use crate::coach::Transcript;

const FILLER_SENTENCES: &[&str] = &[
    "This point matters because it shapes everything that follows in the talk.",
    "Keep this idea in mind as we move through the next part of the story.",
    "Notice how the details connect back to the main question we started with.",
    "The practical takeaway is simple and you can apply it right away.",
    "We will come back to this when we look at the results together.",
];

/// Practice speech returned by the stub recogniser.
pub const STUB_PRACTICE_TEXT: &str = "so um today I want to walk you through our project and \
like why it matters we start with the problem then uh the approach and finally the results \
you know the main idea is simple we measured what users actually do and then we built a tool \
that helps them practise their talks";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FailKind {
    Transient,
    Permanent,
}

#[derive(Debug, Clone)]
pub struct BuiltinStub {
    capability: Capability,
    model: String,
    words: usize,
    base_ms: u64,
    ms_per_word: u64,
    fail: Option<FailKind>,
    fail_slides: Vec<usize>,
    delay_ms: u64,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("stub parameter {key}={value:?} is not a number"))
}

impl BuiltinStub {
    pub fn parse(capability: Capability, model: &str, behaviour: &str) -> Result<Self, String> {
        let (name, query) = behaviour.split_once('?').unwrap_or((behaviour, ""));
        if name != "default" && !name.is_empty() {
            return Err(format!("unknown stub behaviour {name:?}"));
        }
        let mut stub = Self {
            capability,
            model: model.to_string(),
            words: 80,
            base_ms: 1000,
            ms_per_word: 25,
            fail: None,
            fail_slides: Vec::new(),
            delay_ms: 0,
        };
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("stub parameter {pair:?} has no value"))?;
            match k {
                "words" => stub.words = parse_num(k, v)?,
                "base_ms" => stub.base_ms = parse_num(k, v)?,
                "ms_per_word" => stub.ms_per_word = parse_num(k, v)?,
                "delay_ms" => stub.delay_ms = parse_num(k, v)?,
                "fail" => {
                    stub.fail = Some(match v {
                        "transient" => FailKind::Transient,
                        "permanent" => FailKind::Permanent,
                        _ => return Err(format!("stub fail={v:?} is not transient or permanent")),
                    })
                }
                "fail_slides" => {
                    stub.fail_slides = v
                        .split(',')
                        .map(|s| parse_num(k, s))
                        .collect::<Result<_, _>>()?;
                    stub.fail.get_or_insert(FailKind::Transient);
                }
                _ => return Err(format!("unknown stub parameter {k:?}")),
            }
        }
        Ok(stub)
    }

    /// Duration of the audio this stub synthesizes for `text`.
    pub fn synthesized_ms(&self, text: &str) -> u64 {
        self.base_ms + self.ms_per_word * crate::text::count_words(text) as u64
    }

    fn should_fail(&self, request: &ProviderRequest) -> Option<FailKind> {
        let kind = self.fail?;
        if self.fail_slides.is_empty() {
            return Some(kind);
        }
        let slide = match request {
            ProviderRequest::NarrateSlide(r) => r.slide_index,
            ProviderRequest::Synthesize(r) => r.slide_index,
            _ => return None,
        };
        self.fail_slides.contains(&slide).then_some(kind)
    }

    fn narrate(&self, r: &NarrateSlide) -> String {
        let mut words: Vec<String> = Vec::new();
        let opening = format!("On slide {} of {} we look at", r.slide_index, r.slide_count);
        words.extend(opening.split_whitespace().map(str::to_string));
        let mut context: String = r.slide_text.replace("Title:", " ");
        if context.trim().is_empty() {
            context = "the picture on screen".into();
        }
        let mut content: Vec<String> = context.split_whitespace().map(str::to_string).collect();
        if let Some(last) = content.last_mut() {
            last.push('.');
        }
        words.extend(content);
        let mut i = r.slide_index;
        while words.len() < self.words {
            words.extend(
                FILLER_SENTENCES[i % FILLER_SENTENCES.len()]
                    .split_whitespace()
                    .map(str::to_string),
            );
            i += 1;
        }
        words.truncate(self.words.max(1));
        let mut text = words.join(" ");
        if !text.ends_with('.') {
            text = text
                .trim_end_matches(|c: char| !c.is_alphanumeric())
                .to_string();
            text.push('.');
        }
        text
    }

    fn synthesize(&self, text: &str) -> Vec<u8> {
        let rate = 16_000;
        let frames = synth::frames_for_ms(self.synthesized_ms(text), rate);
        let freq = if self.capability == Capability::TtsClone {
            220.0
        } else {
            330.0
        };
        wav::encode_i16(rate, 1, &synth::tone(freq, 0.4, frames, rate))
    }

    fn transcribe(&self, audio: &[u8]) -> ProviderPayload {
        match wav::parse(audio) {
            Ok(info) => ProviderPayload::Transcript(Transcript::evenly_spaced(
                STUB_PRACTICE_TEXT,
                info.duration_ms(),
            )),
            Err(_) => ProviderPayload::Text(STUB_PRACTICE_TEXT.to_string()),
        }
    }

    fn analyze(&self, r: &AnalyzeDelivery) -> String {
        let mut out = format!(
            "Compared the practice recording with the {}-slide exemplar.",
            r.slide_images().len()
        );
        if let Some(m) = &r.metrics {
            out.push_str(&format!(
                " The speaking rate was {:.0} words per minute with {} filler words and {} long pauses.",
                m.words_per_minute, m.filler_count, m.pause_count
            ));
        }
        out.push_str(" The opening was confident and the structure followed the slides.");
        out.push_str(
            " Transitions between slides were abrupt compared with the exemplar narration.",
        );
        out
    }

    fn audience(&self, r: &SimulateAudience) -> String {
        let words = crate::text::count_words(&r.transcript);
        let engagement = if words > 30 { "high" } else { "medium" };
        json!({
            "engagement": engagement,
            "comprehension": "partial",
            "confusion_points": ["the link between the approach and the results"],
            "reaction_summary": format!("As {} I followed the main idea but wanted clearer transitions.", r.audience_profile),
        })
        .to_string()
    }

    fn feedback(&self, r: &ComposeFeedback) -> String {
        let observation = match &r.metrics {
            Some(m) if m.filler_count > 0 => format!(
                "You used {} filler words at {:.0} words per minute.",
                m.filler_count, m.words_per_minute
            ),
            Some(m) => format!("Your pace was {:.0} words per minute.", m.words_per_minute),
            None => "Transitions between slides were abrupt.".to_string(),
        };
        json!({
            "encouragement": "Your opening was confident and clearly framed the problem.",
            "observation": observation,
            "impact": "Listeners may lose the thread between the approach and the results.",
            "suggestion": "Pause briefly before each new slide and name how it connects to the previous one.",
        })
        .to_string()
    }

    fn chat(&self, r: &ChatRequest) -> String {
        let last = r
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let grounded = if r.system.contains("analysis (") {
            "Based on your practice analyses"
        } else {
            "Before your first analysed practice"
        };
        format!("{grounded}, here is my advice on \"{last}\": slow down at transitions and rehearse the opening once more.")
    }
}

#[async_trait]
impl Provider for BuiltinStub {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn capability(&self) -> Capability {
        self.capability
    }

    async fn call(&self, request: &ProviderRequest) -> Result<ProviderPayload, CallError> {
        if self.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.delay_ms)).await;
        }
        match self.should_fail(request) {
            Some(FailKind::Transient) => {
                return Err(CallError::Transient(format!("{} unavailable", self.model)))
            }
            Some(FailKind::Permanent) => {
                return Err(CallError::Permanent(format!(
                    "{} rejected the request",
                    self.model
                )))
            }
            None => {}
        }
        let payload = match request {
            ProviderRequest::NarrateSlide(r) => ProviderPayload::Text(self.narrate(r)),
            ProviderRequest::Synthesize(r) => {
                ProviderPayload::Audio(Bytes(self.synthesize(&r.text)))
            }
            ProviderRequest::Transcribe { audio } => self.transcribe(&audio.0),
            ProviderRequest::AnalyzeDelivery(r) => ProviderPayload::Text(self.analyze(r)),
            ProviderRequest::SimulateAudience(r) => ProviderPayload::Text(self.audience(r)),
            ProviderRequest::ComposeFeedback(r) => ProviderPayload::Text(self.feedback(r)),
            ProviderRequest::Chat(r) => ProviderPayload::Text(self.chat(r)),
        };
        Ok(payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::request::SynthesizeSpeech;

    fn narrate(index: usize, text: &str) -> ProviderRequest {
        ProviderRequest::NarrateSlide(NarrateSlide {
            slide_index: index,
            slide_count: 3,
            image_png: Bytes(vec![1]),
            slide_text: text.into(),
            notes: None,
            user_prompt: String::new(),
            instructions: String::new(),
            previous_tail: None,
            correction: None,
        })
    }

    #[tokio::test]
    async fn narration_has_requested_length() {
        let stub = BuiltinStub::parse(Capability::VlmScript, "vlm", "default?words=72").unwrap();
        for (i, text) in [(1, "Title: Results\nAccuracy rose"), (2, "")] {
            let t = stub
                .call(&narrate(i, text))
                .await
                .unwrap()
                .into_text()
                .unwrap();
            assert_eq!(crate::text::count_words(&t), 72, "{t}");
        }
    }

    #[tokio::test]
    async fn synthesized_duration_follows_word_count() {
        let stub = BuiltinStub::parse(
            Capability::TtsStandard,
            "tts",
            "default?base_ms=500&ms_per_word=40",
        )
        .unwrap();
        let req = ProviderRequest::Synthesize(SynthesizeSpeech {
            slide_index: 1,
            text: "one two three four five".into(),
            reference_audio: None,
            reference_text: None,
        });
        let audio = stub.call(&req).await.unwrap().into_audio().unwrap();
        assert_eq!(wav::parse(&audio).unwrap().duration_ms(), 700);
    }

    #[tokio::test]
    async fn failures_can_target_slides() {
        let stub =
            BuiltinStub::parse(Capability::VlmScript, "vlm", "default?fail_slides=2").unwrap();
        assert!(stub.call(&narrate(1, "a")).await.is_ok());
        assert!(stub
            .call(&narrate(2, "a"))
            .await
            .unwrap_err()
            .is_transient());
        let stub =
            BuiltinStub::parse(Capability::VlmScript, "vlm", "default?fail=permanent").unwrap();
        assert_eq!(
            stub.call(&narrate(1, "a")).await.unwrap_err(),
            CallError::Permanent("vlm rejected the request".into())
        );
    }

    #[test]
    fn rejects_unknown_parameters() {
        assert!(BuiltinStub::parse(Capability::Asr, "asr", "default?colour=red").is_err());
        assert!(BuiltinStub::parse(Capability::Asr, "asr", "chaos").is_err());
        assert!(BuiltinStub::parse(Capability::Asr, "asr", "default?delay_ms=x").is_err());
    }

    #[tokio::test]
    async fn feedback_reply_passes_the_gate() {
        let stub = BuiltinStub::parse(Capability::LlmChat, "llm", "default").unwrap();
        let req = ProviderRequest::ComposeFeedback(ComposeFeedback {
            raw_analysis: "x".into(),
            metrics: None,
            audience_notes: vec![],
            instructions: String::new(),
            correction: None,
        });
        let text = stub.call(&req).await.unwrap().into_text().unwrap();
        let v = crate::coach::audience::extract_json(&text).unwrap();
        let c: crate::coach::OisCandidate = serde_json::from_value(v).unwrap();
        crate::coach::validate_ois(&c).unwrap();
    }
}
