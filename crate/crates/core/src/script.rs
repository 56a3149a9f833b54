//! Per-slide narration scripts generated by a vision-language model.
//!
//! Slides are narrated in order so each prompt can carry the closing
//! sentences of the previous segment. Segment length is a soft target:
//! drafts outside 60..=100 words are regenerated with a corrective
//! instruction a bounded number of times, then kept with a flag.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deck::{Slide, SlideDeck};
use crate::progress::Progress;
use crate::providers::request::NarrateSlide;
use crate::providers::{Bytes, OutcomeAudit, ProviderChain, ProviderError, ProviderRequest};
use crate::store::{BlobStore, StoreError};
use crate::text::{count_words, last_sentences};

pub const MIN_WORDS: usize = 60;
pub const MAX_WORDS: usize = 100;
pub const DEFAULT_REGENERATIONS: u32 = 2;
/// Sentences of the previous segment passed forward for transitions.
pub const TAIL_SENTENCES: usize = 2;

pub const DEFAULT_INSTRUCTIONS: &str = "Write the spoken narration for this slide of a presentation, in English, \
in a natural spoken presentation register. Aim for 60 to 100 words. Explain the slide's content rather than \
reading it out verbatim, quote any non-English slide text as-is, and do not add headings or stage directions. \
When the closing sentences of the previous slide's narration are given, open with a smooth transition from them.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthFlag {
    Ok,
    Short,
    Long,
}

pub fn length_flag(word_count: usize) -> LengthFlag {
    if word_count < MIN_WORDS {
        LengthFlag::Short
    } else if word_count > MAX_WORDS {
        LengthFlag::Long
    } else {
        LengthFlag::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub slide_index: usize,
    pub text: String,
    pub word_count: usize,
    pub length_flag: LengthFlag,
    /// 1 for the first draft.
    pub revision: u32,
}

impl ScriptSegment {
    pub fn new(slide_index: usize, text: &str, revision: u32) -> Self {
        let text = text.trim().to_string();
        let word_count = count_words(&text);
        Self {
            slide_index,
            word_count,
            length_flag: length_flag(word_count),
            text,
            revision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationScript {
    pub deck_id: String,
    pub segments: Vec<ScriptSegment>,
    /// SHA-256 over every final prompt, in slide order.
    pub generation_prompt_digest: String,
}

impl NarrationScript {
    pub fn check(&self, slide_count: usize) -> Result<(), String> {
        if self.segments.len() != slide_count {
            return Err(format!(
                "{} segments for {slide_count} slides",
                self.segments.len()
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.slide_index != i + 1 {
                return Err(format!(
                    "segment {} has slide_index {}",
                    i + 1,
                    s.slide_index
                ));
            }
            if s.word_count != count_words(&s.text) || s.length_flag != length_flag(s.word_count) {
                return Err(format!("segment {} word count or flag is stale", i + 1));
            }
        }
        Ok(())
    }

    /// Plain-text export with `## Slide N` headers.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&format!("## Slide {}\n\n{}\n\n", s.slide_index, s.text));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("slide {0} has not been rendered")]
    MissingImage(usize),
    #[error("slide {slide_index}: {source}")]
    Provider {
        slide_index: usize,
        #[source]
        source: ProviderError,
        /// Segments completed before the failure.
        partial: Vec<ScriptSegment>,
    },
    #[error("slide {slide_index}: provider returned {got} instead of text")]
    NotText {
        slide_index: usize,
        got: &'static str,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ScriptError {
    pub fn slide_index(&self) -> Option<usize> {
        match self {
            Self::MissingImage(i) => Some(*i),
            Self::Provider { slide_index, .. } | Self::NotText { slide_index, .. } => {
                Some(*slide_index)
            }
            Self::Store(_) => None,
        }
    }
}

/// Request narrating `slide` at `position` (1-based index, total).
pub fn build_script_prompt(
    slide: &Slide,
    blobs: &BlobStore,
    user_prompt: &str,
    previous_segment: Option<&str>,
    position: (usize, usize),
) -> Result<NarrateSlide, ScriptError> {
    let image_ref = slide
        .image_ref
        .as_ref()
        .ok_or(ScriptError::MissingImage(slide.index))?;
    let image = blobs.get(image_ref)?;
    Ok(NarrateSlide {
        slide_index: position.0,
        slide_count: position.1,
        image_png: Bytes(image),
        slide_text: slide.text_context(),
        notes: slide.notes.clone(),
        user_prompt: user_prompt.trim().to_string(),
        instructions: DEFAULT_INSTRUCTIONS.to_string(),
        previous_tail: previous_segment
            .map(|p| last_sentences(p, TAIL_SENTENCES))
            .filter(|t| !t.is_empty()),
        correction: None,
    })
}

fn correction_for(word_count: usize) -> String {
    format!(
        "Your previous draft had {word_count} words. Rewrite it to between {MIN_WORDS} and {MAX_WORDS} words."
    )
}

fn digest_update(h: &mut Sha256, req: &NarrateSlide, image_hash: &str) {
    for part in [
        req.instructions.as_str(),
        req.user_prompt.as_str(),
        req.slide_text.as_str(),
        req.notes.as_deref().unwrap_or(""),
        req.previous_tail.as_deref().unwrap_or(""),
        req.correction.as_deref().unwrap_or(""),
        image_hash,
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub script: NarrationScript,
    pub audits: Vec<OutcomeAudit>,
}

/// Narrates every slide in order. `progress` receives one detail per slide
/// on `step`.
pub async fn generate_script(
    deck: &SlideDeck,
    user_prompt: &str,
    chain: &ProviderChain,
    blobs: &BlobStore,
    max_regenerations: u32,
    progress: &dyn Progress,
    step: usize,
) -> Result<ScriptRun, ScriptError> {
    let mut segments: Vec<ScriptSegment> = Vec::with_capacity(deck.slide_count);
    let mut audits = Vec::new();
    let mut digest = Sha256::new();
    for slide in &deck.slides {
        let previous = segments.last().map(|s| s.text.as_str());
        let mut req = build_script_prompt(
            slide,
            blobs,
            user_prompt,
            previous,
            (slide.index, deck.slide_count),
        )?;
        let image_hash = slide
            .image_ref
            .as_ref()
            .map(|r| r.content_hash.clone())
            .unwrap_or_default();
        let mut revision = 1;
        let segment = loop {
            let outcome = chain
                .invoke(&ProviderRequest::NarrateSlide(req.clone()))
                .await
                .map_err(|source| ScriptError::Provider {
                    slide_index: slide.index,
                    source,
                    partial: segments.clone(),
                })?;
            audits.push(outcome.audit(chain.capability()));
            let got = outcome.payload.kind();
            let text = outcome.payload.into_text().ok_or(ScriptError::NotText {
                slide_index: slide.index,
                got,
            })?;
            let seg = ScriptSegment::new(slide.index, &text, revision);
            if seg.length_flag == LengthFlag::Ok || revision > max_regenerations {
                break seg;
            }
            req.correction = Some(correction_for(seg.word_count));
            revision += 1;
        };
        digest_update(&mut digest, &req, &image_hash);
        let note = match segment.length_flag {
            LengthFlag::Ok => String::new(),
            f => format!(", flagged {f:?} at {} words", segment.word_count).to_lowercase(),
        };
        progress.detail(
            step,
            format!("slide {}/{}{note}", slide.index, deck.slide_count),
        );
        segments.push(segment);
    }
    Ok(ScriptRun {
        script: NarrationScript {
            deck_id: deck.id.clone(),
            segments,
            generation_prompt_digest: hex::encode(digest.finalize()),
        },
        audits,
    })
}
