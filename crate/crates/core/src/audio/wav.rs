//! Minimal RIFF/WAVE reader and writer. PCM integer formats only.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("truncated {0} chunk")]
    Truncated(&'static str),
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("unsupported format tag {0:#06x} (PCM only)")]
    UnsupportedFormat(u16),
    #[error("unsupported bit depth {0}")]
    UnsupportedBits(u16),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub byte_rate: u32,
    pub block_align: u16,
    pub data_offset: usize,
    pub data_len: usize,
}

impl WavInfo {
    pub fn frame_count(&self) -> u64 {
        (self.data_len / self.block_align as usize) as u64
    }

    /// Frame count over sample rate, rounded to the nearest millisecond.
    pub fn duration_ms(&self) -> u64 {
        let rate = self.sample_rate as u64;
        (self.frame_count() * 1000 + rate / 2) / rate
    }

    /// Duration implied by the header's byte rate and data size.
    pub fn header_duration_ms(&self) -> f64 {
        self.data_len as f64 * 1000.0 / self.byte_rate as f64
    }

    pub fn is_spec(&self, sample_rate: u32, channels: u16) -> bool {
        self.sample_rate == sample_rate && self.channels == channels && self.bits_per_sample == 16
    }
}

impl fmt::Display for WavInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} Hz, {} ch, {}-bit, {} frames",
            self.sample_rate,
            self.channels,
            self.bits_per_sample,
            self.frame_count()
        )
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn looks_like_wav(bytes: &[u8]) -> bool {
    bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WAVE"
}

pub fn parse(bytes: &[u8]) -> Result<WavInfo, WavError> {
    if !looks_like_wav(bytes) {
        return Err(WavError::NotWave);
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u32, u16, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(WavError::Truncated("fmt"));
                }
                let mut tag = u16_at(bytes, body);
                if tag == WAVE_FORMAT_EXTENSIBLE {
                    if size < 40 || body + 26 > bytes.len() {
                        return Err(WavError::Truncated("fmt"));
                    }
                    tag = u16_at(bytes, body + 24);
                }
                fmt = Some((
                    tag,
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u32_at(bytes, body + 8),
                    u16_at(bytes, body + 12),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (tag, channels, sample_rate, byte_rate, block_align, bits) =
                    fmt.ok_or(WavError::MissingChunk("fmt"))?;
                if tag != WAVE_FORMAT_PCM {
                    return Err(WavError::UnsupportedFormat(tag));
                }
                if !matches!(bits, 8 | 16 | 24 | 32) {
                    return Err(WavError::UnsupportedBits(bits));
                }
                if channels == 0 || sample_rate == 0 {
                    return Err(WavError::InvalidHeader(
                        "zero channels or sample rate".into(),
                    ));
                }
                if block_align as u32 != channels as u32 * (bits as u32 / 8) {
                    return Err(WavError::InvalidHeader(format!(
                        "block_align {block_align} inconsistent with {channels} ch x {bits} bit"
                    )));
                }
                if byte_rate as u64 != sample_rate as u64 * block_align as u64 {
                    return Err(WavError::InvalidHeader(format!(
                        "byte_rate {byte_rate} inconsistent with sample rate {sample_rate}"
                    )));
                }
                // Streamed writers leave the size as 0 or 0xFFFFFFFF.
                let available = bytes.len() - body;
                let data_len = if size == 0 || size > available {
                    available
                } else {
                    size
                };
                let data_len = data_len - data_len % block_align as usize;
                return Ok(WavInfo {
                    sample_rate,
                    channels,
                    bits_per_sample: bits,
                    byte_rate,
                    block_align,
                    data_offset: body,
                    data_len,
                });
            }
            _ => {}
        }
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    if fmt.is_none() {
        Err(WavError::MissingChunk("fmt"))
    } else {
        Err(WavError::MissingChunk("data"))
    }
}

/// Decodes to mono f32 in [-1, 1], averaging channels.
pub fn decode_mono(bytes: &[u8]) -> Result<(WavInfo, Vec<f32>), WavError> {
    let info = parse(bytes)?;
    let data = &bytes[info.data_offset..info.data_offset + info.data_len];
    let width = (info.bits_per_sample / 8) as usize;
    let channels = info.channels as usize;
    let mut out = Vec::with_capacity(info.frame_count() as usize);
    for frame in data.chunks_exact(info.block_align as usize) {
        let mut acc = 0.0f32;
        for ch in 0..channels {
            let s = &frame[ch * width..(ch + 1) * width];
            acc += match width {
                1 => (s[0] as f32 - 128.0) / 128.0,
                2 => i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0,
                3 => {
                    let v = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
                    v as f32 / 8_388_608.0
                }
                _ => i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f32 / 2_147_483_648.0,
            };
        }
        out.push(acc / channels as f32);
    }
    Ok((info, out))
}

/// Encodes interleaved 16-bit samples as a canonical 44-byte-header WAV.
pub fn encode_i16(sample_rate: u32, channels: u16, samples: &[i16]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let block_align = channels * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}
