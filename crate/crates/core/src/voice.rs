//! Voice samples, cloned-voice synthesis with standard-TTS fallback, and
//! audio normalization.

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::audio::{self, wav, AudioContainer, AudioSpec, WavError, WavInfo};
use crate::media::{MediaError, MediaToolchain};
use crate::progress::Progress;
use crate::providers::request::SynthesizeSpeech;
use crate::providers::{
    Bytes, Capability, OutcomeAudit, ProviderChain, ProviderError, ProviderRequest,
};
use crate::script::{NarrationScript, ScriptSegment};
use crate::store::{BlobRef, BlobStore, MediaKind, StoreError};

/// Fixed transcript of the voice sample sent with every cloning request.
pub const REFERENCE_TEXT: &str = "This is a sample text for voice cloning";
pub const DEFAULT_MIN_SAMPLE_MS: u64 = 3000;
pub const DEFAULT_BATCH_PARALLELISM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum VoiceError {
    #[error("unsupported audio: {0}")]
    Unsupported(String),
    #[error("audio conversion needs the media toolchain, which is not available")]
    ToolchainUnavailable,
    #[error("audio conversion failed: {0}")]
    Conversion(#[from] MediaError),
    #[error("invalid WAV: {0}")]
    Wav(#[from] WavError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct NormalizedAudio {
    pub bytes: Vec<u8>,
    pub info: WavInfo,
    pub source: AudioContainer,
}

impl NormalizedAudio {
    pub fn duration_ms(&self) -> u64 {
        self.info.duration_ms()
    }
}

/// Converts WebM, M4A or WAV to PCM WAV at `target`. A WAV already at the
/// target spec is passed through byte for byte.
pub async fn normalize_bytes(
    bytes: &[u8],
    target: AudioSpec,
    media: Option<&MediaToolchain>,
) -> Result<NormalizedAudio, VoiceError> {
    let source = audio::sniff_container(bytes)
        .ok_or_else(|| VoiceError::Unsupported("not a WebM, M4A or WAV file".into()))?;
    if source == AudioContainer::Wav {
        let info = wav::parse(bytes)?;
        if info.is_spec(target.sample_rate_hz, target.channels) {
            return Ok(NormalizedAudio {
                bytes: bytes.to_vec(),
                info,
                source,
            });
        }
    }
    let media = media.ok_or(VoiceError::ToolchainUnavailable)?;
    let work = tempfile::Builder::new().prefix("audio-").tempdir()?;
    let input = work.path().join(format!("input.{}", source.extension()));
    let output = work.path().join("output.wav");
    tokio::fs::write(&input, bytes).await?;
    media.convert_to_wav(&input, &output, target).await?;
    let out = tokio::fs::read(&output).await?;
    let info = wav::parse(&out)?;
    if !info.is_spec(target.sample_rate_hz, target.channels) {
        return Err(VoiceError::Unsupported(format!(
            "converter produced {info}"
        )));
    }
    Ok(NormalizedAudio {
        bytes: out,
        info,
        source,
    })
}

/// Normalizes a stored upload and stores the result.
pub async fn normalize_audio(
    blobs: &BlobStore,
    input: &BlobRef,
    target: AudioSpec,
    media: Option<&MediaToolchain>,
) -> Result<(BlobRef, NormalizedAudio), VoiceError> {
    if !matches!(
        input.media_kind,
        MediaKind::Webm | MediaKind::M4a | MediaKind::Wav
    ) {
        return Err(VoiceError::Unsupported(format!(
            "{:?} is not an audio upload",
            input.media_kind
        )));
    }
    let bytes = blobs.get(input)?;
    let norm = normalize_bytes(&bytes, target, media).await?;
    let blob = if norm.bytes == bytes && input.media_kind == MediaKind::Wav {
        input.clone()
    } else {
        blobs.put(&norm.bytes, MediaKind::Wav)?
    };
    Ok((blob, norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileStatus {
    Ready,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceProfile {
    pub sample_ref: BlobRef,
    pub original_format: AudioContainer,
    pub sample_duration_ms: u64,
    pub reference_text: String,
    pub status: ProfileStatus,
    /// User-facing reason when the profile is invalid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl VoiceProfile {
    pub fn is_ready(&self) -> bool {
        self.status == ProfileStatus::Ready
    }
}

pub async fn prepare_voice_profile(
    blobs: &BlobStore,
    sample: &BlobRef,
    target: AudioSpec,
    min_sample_ms: u64,
    media: Option<&MediaToolchain>,
) -> Result<VoiceProfile, VoiceError> {
    let (sample_ref, norm) = normalize_audio(blobs, sample, target, media).await?;
    let duration = norm.duration_ms();
    let (status, message) = if duration >= min_sample_ms {
        (ProfileStatus::Ready, None)
    } else {
        (
            ProfileStatus::Invalid,
            Some(format!(
                "The voice sample is {:.1} s long; at least {:.1} s is needed for voice cloning. Standard narration will be used unless you record a longer sample.",
                duration as f64 / 1000.0,
                min_sample_ms as f64 / 1000.0
            )),
        )
    };
    Ok(VoiceProfile {
        sample_ref,
        original_format: norm.source,
        sample_duration_ms: duration,
        reference_text: REFERENCE_TEXT.to_string(),
        status,
        message,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    Cloned,
    FallbackTts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub slide_index: usize,
    pub audio_ref: BlobRef,
    pub duration_ms: u64,
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub synthesis_mode: SynthesisMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedSegment {
    pub segment: AudioSegment,
    pub audit: OutcomeAudit,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("slide {slide_index}: {source}")]
    Provider {
        slide_index: usize,
        #[source]
        source: ProviderError,
    },
    #[error("slide {slide_index}: unusable audio: {reason}")]
    BadAudio { slide_index: usize, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl SynthesisError {
    pub fn slide_index(&self) -> Option<usize> {
        match self {
            Self::Provider { slide_index, .. } | Self::BadAudio { slide_index, .. } => {
                Some(*slide_index)
            }
            Self::Store(_) => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("synthesis failed for slides {:?}", .failures.iter().map(|f| f.0).collect::<Vec<_>>())]
pub struct BatchError {
    pub failures: Vec<(usize, String)>,
    /// Segments that did synthesize, in slide order.
    pub partial: Vec<SynthesizedSegment>,
}

/// Everything synthesis needs besides the text.
pub struct Synthesizer<'a> {
    pub chain: &'a ProviderChain,
    pub blobs: &'a BlobStore,
    pub media: Option<&'a MediaToolchain>,
    pub target: AudioSpec,
}

impl Synthesizer<'_> {
    fn reference(&self, profile: &VoiceProfile) -> Result<Option<Bytes>, StoreError> {
        if profile.is_ready() {
            Ok(Some(Bytes(self.blobs.get(&profile.sample_ref)?)))
        } else {
            Ok(None)
        }
    }

    async fn synthesize_with(
        &self,
        segment: &ScriptSegment,
        profile: &VoiceProfile,
        reference: Option<Bytes>,
    ) -> Result<SynthesizedSegment, SynthesisError> {
        let slide_index = segment.slide_index;
        let cloning = reference.is_some();
        let req = ProviderRequest::Synthesize(SynthesizeSpeech {
            slide_index,
            text: segment.text.clone(),
            reference_audio: reference,
            reference_text: cloning.then(|| profile.reference_text.clone()),
        });
        let result = if cloning {
            self.chain.invoke(&req).await
        } else {
            self.chain
                .invoke_filtered(&req, |m| m.provider.capability() != Capability::TtsClone)
                .await
        };
        let outcome = result.map_err(|source| SynthesisError::Provider {
            slide_index,
            source,
        })?;
        let audit = outcome.audit(self.chain.capability());
        let degraded = outcome.degraded;
        let got = outcome.payload.kind();
        let raw = outcome
            .payload
            .into_audio()
            .ok_or_else(|| SynthesisError::BadAudio {
                slide_index,
                reason: format!("provider returned {got}"),
            })?;
        let norm = normalize_bytes(&raw, self.target, self.media)
            .await
            .map_err(|e| SynthesisError::BadAudio {
                slide_index,
                reason: e.to_string(),
            })?;
        let duration_ms = norm.duration_ms();
        if duration_ms == 0 {
            return Err(SynthesisError::BadAudio {
                slide_index,
                reason: "audio has no samples".into(),
            });
        }
        let audio_ref = self.blobs.put(&norm.bytes, MediaKind::Wav)?;
        Ok(SynthesizedSegment {
            segment: AudioSegment {
                slide_index,
                audio_ref,
                duration_ms,
                sample_rate_hz: norm.info.sample_rate,
                channels: norm.info.channels,
                synthesis_mode: if degraded {
                    SynthesisMode::FallbackTts
                } else {
                    SynthesisMode::Cloned
                },
            },
            audit,
        })
    }

    /// Cloned voice when the profile is ready; otherwise cloning members
    /// of the chain are skipped entirely.
    pub async fn synthesize_segment(
        &self,
        segment: &ScriptSegment,
        profile: &VoiceProfile,
    ) -> Result<SynthesizedSegment, SynthesisError> {
        let reference = self.reference(profile)?;
        self.synthesize_with(segment, profile, reference).await
    }

    async fn synthesize_reporting(
        &self,
        seg: &ScriptSegment,
        profile: &VoiceProfile,
        reference: Option<Bytes>,
        progress: &dyn Progress,
        step: usize,
        total: usize,
    ) -> Result<SynthesizedSegment, SynthesisError> {
        let r = self.synthesize_with(seg, profile, reference).await;
        if let Ok(s) = &r {
            let mode = match s.segment.synthesis_mode {
                SynthesisMode::Cloned => String::new(),
                SynthesisMode::FallbackTts => format!(
                    ", degraded synthesis: standard TTS ({}) used",
                    s.audit.provider_used
                ),
            };
            progress.detail(step, format!("slide {}/{total}{mode}", seg.slide_index));
        }
        r
    }

    /// Synthesizes every segment with at most `parallelism` calls in
    /// flight. Results come back in slide order whatever the completion
    /// order.
    pub async fn synthesize_batch(
        &self,
        script: &NarrationScript,
        profile: &VoiceProfile,
        parallelism: usize,
        progress: &dyn Progress,
        step: usize,
    ) -> Result<Vec<SynthesizedSegment>, BatchError> {
        let reference = self.reference(profile).map_err(|e| BatchError {
            failures: vec![(0, e.to_string())],
            partial: Vec::new(),
        })?;
        let total = script.segments.len();
        let jobs: Vec<_> = script
            .segments
            .iter()
            .map(|seg| {
                self.synthesize_reporting(seg, profile, reference.clone(), progress, step, total)
            })
            .collect();
        let results: Vec<Result<SynthesizedSegment, SynthesisError>> = stream::iter(jobs)
            .buffer_unordered(parallelism.max(1))
            .collect()
            .await;
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(s) => ok.push(s),
                Err(e) => failures.push((e.slide_index().unwrap_or(0), e.to_string())),
            }
        }
        ok.sort_by_key(|s| s.segment.slide_index);
        failures.sort_by_key(|f| f.0);
        if failures.is_empty() {
            Ok(ok)
        } else {
            Err(BatchError {
                failures,
                partial: ok,
            })
        }
    }
}
