//! Practice analysis: deterministic delivery metrics, provider-backed
//! multimodal and audience analyses, and validated OIS feedback.

pub mod audience;
pub mod feedback;
pub mod metrics;
pub mod pauses;
pub mod report;

use serde::{Deserialize, Serialize};

pub use audience::{
    simulate_audience, AudienceError, AudienceNote, AudienceOutcome, Comprehension, Engagement,
};
pub use feedback::{
    compose_feedback, validate_ois, FeedbackError, OisCandidate, OisFeedback, OisViolation,
    MAX_OIS_WORDS,
};
pub use metrics::{compute_delivery_metrics, DeliveryMetrics, FillerLexicon, MetricsError};
pub use pauses::{detect_pauses, Pause, PauseParams};
pub use report::{
    analyze_practice, run_multimodal_analysis, AnalysisError, AnalysisReport, CoachContext,
    CoachSettings, FailureMarker, FourSourceBundle, FourSourceBundleBuilder, MissingSource,
    PracticeRecording, SlideRange, ANALYSIS_STEPS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub confidence: f32,
}

/// ASR output. `full_text` is the space-join of the word texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub words: Vec<Word>,
    pub full_text: String,
}

impl Transcript {
    pub fn from_words(words: Vec<Word>) -> Result<Self, String> {
        let t = Self {
            full_text: words
                .iter()
                .map(|w| w.text.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            words,
        };
        t.check()?;
        Ok(t)
    }

    /// Words spread evenly over `duration_ms`; used by stub ASR.
    pub fn evenly_spaced(text: &str, duration_ms: u64) -> Self {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let n = tokens.len().max(1) as u64;
        let words = tokens
            .iter()
            .enumerate()
            .map(|(i, w)| Word {
                text: (*w).to_string(),
                start_ms: duration_ms * i as u64 / n,
                end_ms: duration_ms * (i as u64 + 1) / n,
                confidence: 1.0,
            })
            .collect();
        Self::from_words(words).expect("evenly spaced words are ordered")
    }

    pub fn check(&self) -> Result<(), String> {
        if self.words.windows(2).any(|w| w[1].start_ms < w[0].start_ms) {
            return Err("word start times decrease".into());
        }
        if let Some(w) = self.words.iter().find(|w| w.end_ms < w.start_ms) {
            return Err(format!("word {:?} ends before it starts", w.text));
        }
        let joined = self
            .words
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if joined != self.full_text {
            return Err("full_text does not match the words".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_invariants() {
        let t = Transcript::evenly_spaced("so the plan is simple", 1000);
        assert_eq!(t.full_text, "so the plan is simple");
        assert_eq!(t.words[4].end_ms, 1000);
        t.check().unwrap();

        let mut bad = t.clone();
        bad.words.swap(0, 1);
        assert!(bad.check().is_err());
        let mut bad = t;
        bad.full_text.push('!');
        assert!(bad.check().is_err());
    }
}
