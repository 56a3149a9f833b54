//! Delivery metrics computed locally from the recording and its transcript.

use serde::{Deserialize, Serialize};

use super::pauses::{detect_in_samples, Pause, PauseParams};
use super::Transcript;
use crate::audio::{wav, WavError};
use crate::text::count_words;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("recording has zero duration")]
    ZeroDuration,
    #[error(transparent)]
    Wav(#[from] WavError),
}

pub const DEFAULT_FILLERS: [&str; 8] = [
    "um", "uh", "er", "ah", "like", "you know", "sort of", "kind of",
];

/// Filler words and phrases. Matching is case-insensitive on transcript
/// tokens with surrounding punctuation removed; multiword entries match
/// adjacent tokens and the longest entry wins at each position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FillerLexicon {
    entries: Vec<Vec<String>>,
}

impl Default for FillerLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_FILLERS)
    }
}

impl From<Vec<String>> for FillerLexicon {
    fn from(v: Vec<String>) -> Self {
        Self::new(v)
    }
}

impl From<FillerLexicon> for Vec<String> {
    fn from(l: FillerLexicon) -> Self {
        l.entries.iter().map(|e| e.join(" ")).collect()
    }
}

pub fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
        .to_lowercase()
}

impl FillerLexicon {
    pub fn new<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> Self {
        let mut entries: Vec<Vec<String>> = items
            .into_iter()
            .map(|s| {
                s.as_ref()
                    .split_whitespace()
                    .map(normalize_token)
                    .filter(|t| !t.is_empty())
                    .collect::<Vec<_>>()
            })
            .filter(|e| !e.is_empty())
            .collect();
        entries.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        entries.dedup();
        Self { entries }
    }

    pub fn count(&self, text: &str) -> usize {
        let tokens: Vec<String> = text.split_whitespace().map(normalize_token).collect();
        let mut i = 0;
        let mut count = 0;
        while i < tokens.len() {
            match self
                .entries
                .iter()
                .find(|e| tokens.len() - i >= e.len() && tokens[i..i + e.len()] == e[..])
            {
                Some(e) => {
                    count += 1;
                    i += e.len();
                }
                None => i += 1,
            }
        }
        count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryMetrics {
    pub word_count: u64,
    /// `word_count * 60000 / duration_ms`, over the whole recording.
    pub words_per_minute: f64,
    pub filler_count: u64,
    /// Fillers per 100 words; 0 when there are no words.
    pub filler_rate: f64,
    pub pause_count: u64,
    pub total_pause_ms: u64,
    pub longest_pause_ms: u64,
    /// Recording time outside detected pauses.
    pub speech_ms: u64,
    pub duration_ms: u64,
    pub ideal_duration_ms: Option<u64>,
    /// `duration_ms / ideal_duration_ms`.
    pub duration_ratio: Option<f64>,
    pub pauses: Vec<Pause>,
}

pub fn compute_delivery_metrics(
    transcript: &Transcript,
    audio: &[u8],
    lexicon: &FillerLexicon,
    params: &PauseParams,
    ideal_duration_ms: Option<u64>,
) -> Result<DeliveryMetrics, MetricsError> {
    let (info, samples) = wav::decode_mono(audio)?;
    let duration_ms = info.duration_ms();
    if duration_ms == 0 {
        return Err(MetricsError::ZeroDuration);
    }
    let pauses = detect_in_samples(&samples, info.sample_rate, params);
    let word_count = count_words(&transcript.full_text) as u64;
    let filler_count = lexicon.count(&transcript.full_text) as u64;
    let total_pause_ms: u64 = pauses.iter().map(Pause::duration_ms).sum();
    let ideal_duration_ms = ideal_duration_ms.filter(|&d| d > 0);
    Ok(DeliveryMetrics {
        word_count,
        words_per_minute: word_count as f64 * 60_000.0 / duration_ms as f64,
        filler_count,
        filler_rate: if word_count == 0 {
            0.0
        } else {
            filler_count as f64 * 100.0 / word_count as f64
        },
        pause_count: pauses.len() as u64,
        total_pause_ms,
        longest_pause_ms: pauses.iter().map(Pause::duration_ms).max().unwrap_or(0),
        speech_ms: duration_ms.saturating_sub(total_pause_ms),
        duration_ms,
        ideal_duration_ms,
        duration_ratio: ideal_duration_ms.map(|ideal| duration_ms as f64 / ideal as f64),
        pauses,
    })
}

impl DeliveryMetrics {
    pub fn check(&self) -> Result<(), String> {
        if self.filler_count > self.word_count {
            return Err("more fillers than words".into());
        }
        if self.speech_ms + self.total_pause_ms > self.duration_ms {
            return Err("speech and pauses exceed the recording".into());
        }
        if self.duration_ratio.is_some_and(|r| !(r > 0.0)) {
            return Err("duration ratio must be positive".into());
        }
        Ok(())
    }

    /// Two-line digest for prompts and chat summaries.
    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{:.0} wpm, {} words, {} fillers ({:.1} per 100 words), {} pauses totalling {} ms (longest {} ms), duration {} ms",
            self.words_per_minute,
            self.word_count,
            self.filler_count,
            self.filler_rate,
            self.pause_count,
            self.total_pause_ms,
            self.longest_pause_ms,
            self.duration_ms
        );
        if let Some(r) = self.duration_ratio {
            s.push_str(&format!(", {r:.2}x the ideal length"));
        }
        s
    }
}
