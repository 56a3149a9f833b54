//! PCM audio helpers: WAV parsing, duration measurement, container sniffing
//! and tone/silence synthesis for fixtures and stub providers.

pub mod wav;

pub use wav::{WavError, WavInfo};

/// Target interchange spec: 16-bit PCM WAV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AudioSpec {
    pub sample_rate_hz: u32,
    pub channels: u16,
}

impl Default for AudioSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            channels: 1,
        }
    }
}

/// Duration of a PCM WAV in milliseconds, from the frame count.
pub fn measure_duration(bytes: &[u8]) -> Result<u64, WavError> {
    Ok(wav::parse(bytes)?.duration_ms())
}

/// Audio containers accepted on upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioContainer {
    Webm,
    M4a,
    Wav,
}

impl AudioContainer {
    pub fn from_name(name: &str) -> Option<Self> {
        let ext = name.rsplit('.').next()?.to_ascii_lowercase();
        match ext.as_str() {
            "webm" => Some(Self::Webm),
            "m4a" | "mp4" | "aac" => Some(Self::M4a),
            "wav" | "wave" => Some(Self::Wav),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Webm => "webm",
            Self::M4a => "m4a",
            Self::Wav => "wav",
        }
    }

    pub fn media_kind(self) -> crate::store::MediaKind {
        use crate::store::MediaKind;
        match self {
            Self::Webm => MediaKind::Webm,
            Self::M4a => MediaKind::M4a,
            Self::Wav => MediaKind::Wav,
        }
    }
}

/// Identifies the container from magic bytes.
pub fn sniff_container(bytes: &[u8]) -> Option<AudioContainer> {
    if wav::looks_like_wav(bytes) {
        Some(AudioContainer::Wav)
    } else if bytes.len() >= 4 && bytes[0..4] == [0x1A, 0x45, 0xDF, 0xA3] {
        Some(AudioContainer::Webm)
    } else if bytes.len() >= 12 && &bytes[4..8] == b"ftyp" {
        Some(AudioContainer::M4a)
    } else {
        None
    }
}

pub mod synth {
    //! Deterministic signal generators.

    /// A sine tone of `amplitude` (0..1 of full scale).
    pub fn tone(freq_hz: f32, amplitude: f32, frames: usize, sample_rate: u32) -> Vec<i16> {
        (0..frames)
            .map(|i| {
                let t = i as f32 / sample_rate as f32;
                ((2.0 * std::f32::consts::PI * freq_hz * t).sin() * amplitude * 32767.0) as i16
            })
            .collect()
    }

    pub fn silence(frames: usize) -> Vec<i16> {
        vec![0; frames]
    }

    pub fn frames_for_ms(ms: u64, sample_rate: u32) -> usize {
        (ms * sample_rate as u64 / 1000) as usize
    }

    /// Mono WAV alternating tone and digital silence. `spans` lists
    /// `(is_tone, duration_ms)` pieces in order.
    pub fn tone_silence_wav(spans: &[(bool, u64)], sample_rate: u32) -> Vec<u8> {
        let mut samples = Vec::new();
        for &(is_tone, ms) in spans {
            let n = frames_for_ms(ms, sample_rate);
            if is_tone {
                samples.extend(tone(440.0, 0.5, n, sample_rate));
            } else {
                samples.extend(silence(n));
            }
        }
        super::wav::encode_i16(sample_rate, 1, &samples)
    }
}
