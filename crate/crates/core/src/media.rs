//! External media toolchain (FFmpeg) wrapper.
//!
//! The binary is discovered in this order: explicit config path, the
//! `PRESOCOACH_FFMPEG` environment variable, `ffmpeg` on `PATH`, and finally
//! the static build shipped with the `imageio-ffmpeg` Python package.
//! Probing parses `ffmpeg -i` output, so no separate prober binary is needed.

use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::OnceLock;
use tokio::process::Command;

use crate::audio::AudioSpec;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("media toolchain not found (set PRESOCOACH_FFMPEG or install ffmpeg)")]
    NotFound,
    #[error("media toolchain failed ({status}): {stderr}")]
    Failed { status: String, stderr: String },
    #[error("could not probe {path}: {reason}")]
    Probe { path: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeInfo {
    pub duration_ms: u64,
    pub video: Option<(u32, u32)>,
    pub has_audio: bool,
}

/// Video encoding parameters shared by every segment of an exemplar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VideoSpec {
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub audio_rate_hz: u32,
}

impl Default for VideoSpec {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            fps: 30,
            audio_rate_hz: 48_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MediaToolchain {
    ffmpeg: PathBuf,
}

fn discovered() -> Option<PathBuf> {
    static CACHE: OnceLock<Option<PathBuf>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            if let Ok(p) = std::env::var("PRESOCOACH_FFMPEG") {
                if !p.is_empty() {
                    return Some(PathBuf::from(p));
                }
            }
            if let Some(paths) = std::env::var_os("PATH") {
                for dir in std::env::split_paths(&paths) {
                    let candidate = dir.join("ffmpeg");
                    if candidate.is_file() {
                        return Some(candidate);
                    }
                }
            }
            let out = std::process::Command::new("python3")
                .args([
                    "-c",
                    "import imageio_ffmpeg; print(imageio_ffmpeg.get_ffmpeg_exe())",
                ])
                .stderr(Stdio::null())
                .output()
                .ok()?;
            let path = String::from_utf8(out.stdout).ok()?.trim().to_string();
            (out.status.success() && !path.is_empty()).then(|| PathBuf::from(path))
        })
        .clone()
}

impl MediaToolchain {
    pub fn new(ffmpeg: impl Into<PathBuf>) -> Self {
        Self {
            ffmpeg: ffmpeg.into(),
        }
    }

    pub fn discover(configured: Option<&Path>) -> Result<Self, MediaError> {
        if let Some(p) = configured {
            return if p.is_file() {
                Ok(Self::new(p))
            } else {
                Err(MediaError::NotFound)
            };
        }
        discovered().map(Self::new).ok_or(MediaError::NotFound)
    }

    pub fn ffmpeg_path(&self) -> &Path {
        &self.ffmpeg
    }

    async fn run(&self, args: &[String]) -> Result<(), MediaError> {
        tracing::debug!(ffmpeg = %self.ffmpeg.display(), ?args, "running media toolchain");
        let out = Command::new(&self.ffmpeg)
            .args(["-hide_banner", "-nostdin", "-loglevel", "error", "-y"])
            .args(args)
            .stdin(Stdio::null())
            .output()
            .await
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => MediaError::NotFound,
                _ => MediaError::Io(e),
            })?;
        if !out.status.success() {
            return Err(MediaError::Failed {
                status: out.status.to_string(),
                stderr: tail(&String::from_utf8_lossy(&out.stderr), 2000),
            });
        }
        Ok(())
    }

    pub async fn probe(&self, path: &Path) -> Result<ProbeInfo, MediaError> {
        let out = Command::new(&self.ffmpeg)
            .args(["-hide_banner", "-nostdin", "-i"])
            .arg(path)
            .stdin(Stdio::null())
            .output()
            .await?;
        // `ffmpeg -i` without an output always exits non-zero; parse stderr.
        let text = String::from_utf8_lossy(&out.stderr);
        parse_probe(&text).ok_or_else(|| MediaError::Probe {
            path: path.display().to_string(),
            reason: tail(&text, 500),
        })
    }

    /// Transcodes any supported container to 16-bit PCM WAV at `spec`.
    pub async fn convert_to_wav(
        &self,
        input: &Path,
        output: &Path,
        spec: AudioSpec,
    ) -> Result<(), MediaError> {
        self.run(&[
            "-i".into(),
            path_arg(input),
            "-vn".into(),
            "-acodec".into(),
            "pcm_s16le".into(),
            "-ar".into(),
            spec.sample_rate_hz.to_string(),
            "-ac".into(),
            spec.channels.to_string(),
            "-f".into(),
            "wav".into(),
            path_arg(output),
        ])
        .await
    }

    /// Encodes a still image for exactly `duration_ms`, letterboxed into
    /// the spec's frame without distorting the aspect ratio.
    pub async fn compose_still(
        &self,
        image: &Path,
        audio: &Path,
        output: &Path,
        spec: VideoSpec,
        duration_ms: u64,
    ) -> Result<(), MediaError> {
        let filter = format!(
            "scale={w}:{h}:force_original_aspect_ratio=decrease,pad={w}:{h}:(ow-iw)/2:(oh-ih)/2:color=black,setsar=1,format=yuv420p",
            w = spec.width,
            h = spec.height
        );
        let seconds = format!("{:.3}", duration_ms as f64 / 1000.0);
        self.run(&[
            "-loop".into(),
            "1".into(),
            "-framerate".into(),
            spec.fps.to_string(),
            "-i".into(),
            path_arg(image),
            "-i".into(),
            path_arg(audio),
            "-vf".into(),
            filter,
            "-af".into(),
            "apad".into(),
            "-t".into(),
            seconds,
            "-c:v".into(),
            "libx264".into(),
            "-preset".into(),
            "ultrafast".into(),
            "-tune".into(),
            "stillimage".into(),
            "-r".into(),
            spec.fps.to_string(),
            "-c:a".into(),
            "aac".into(),
            "-ar".into(),
            spec.audio_rate_hz.to_string(),
            "-ac".into(),
            "2".into(),
            "-movflags".into(),
            "+faststart".into(),
            path_arg(output),
        ])
        .await
    }

    /// Stream-copy concatenation of uniformly encoded segments.
    pub async fn concat(&self, segments: &[PathBuf], output: &Path) -> Result<(), MediaError> {
        let list = output.with_extension("concat.txt");
        let mut body = String::new();
        for s in segments {
            let abs = std::path::absolute(s)?;
            body.push_str(&format!(
                "file '{}'\n",
                abs.display().to_string().replace('\'', "'\\''")
            ));
        }
        tokio::fs::write(&list, body).await?;
        let result = self
            .run(&[
                "-f".into(),
                "concat".into(),
                "-safe".into(),
                "0".into(),
                "-i".into(),
                path_arg(&list),
                "-c".into(),
                "copy".into(),
                "-movflags".into(),
                "+faststart".into(),
                path_arg(output),
            ])
            .await;
        let _ = tokio::fs::remove_file(&list).await;
        result
    }

    /// Encodes a WAV into another container; used to build upload fixtures.
    pub async fn encode_audio(
        &self,
        input: &Path,
        output: &Path,
        codec: &str,
    ) -> Result<(), MediaError> {
        self.run(&[
            "-i".into(),
            path_arg(input),
            "-c:a".into(),
            codec.into(),
            path_arg(output),
        ])
        .await
    }
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

fn tail(s: &str, max: usize) -> String {
    let s = s.trim();
    if s.len() <= max {
        return s.to_string();
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

/// Parses the `Duration:` and stream lines printed by `ffmpeg -i`.
pub fn parse_probe(text: &str) -> Option<ProbeInfo> {
    let mut duration_ms = None;
    let mut video = None;
    let mut has_audio = false;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("Duration: ") {
            let ts = rest.split(',').next()?.trim();
            duration_ms = parse_timestamp(ts);
        } else if line.starts_with("Stream #") {
            if let Some(idx) = line.find("Video:") {
                video = video.or_else(|| parse_resolution(&line[idx..]));
            } else if line.contains("Audio:") {
                has_audio = true;
            }
        }
    }
    Some(ProbeInfo {
        duration_ms: duration_ms?,
        video,
        has_audio,
    })
}

fn parse_timestamp(ts: &str) -> Option<u64> {
    let mut parts = ts.split(':');
    let h: u64 = parts.next()?.parse().ok()?;
    let m: u64 = parts.next()?.parse().ok()?;
    let s: f64 = parts.next()?.parse().ok()?;
    Some(h * 3_600_000 + m * 60_000 + (s * 1000.0).round() as u64)
}

fn parse_resolution(stream: &str) -> Option<(u32, u32)> {
    for token in stream.split([',', ' ']) {
        if let Some((w, h)) = token.split_once('x') {
            if let (Ok(w), Ok(h)) = (w.parse::<u32>(), h.parse::<u32>()) {
                if w > 0 && h > 0 {
                    return Some((w, h));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"Input #0, mov,mp4,m4a,3gp,3g2,mj2, from 'out.mp4':
  Metadata:
    major_brand     : isom
  Duration: 00:00:10.03, start: 0.000000, bitrate: 95 kb/s
  Stream #0:0[0x1](und): Video: h264 (High) (avc1 / 0x31637661), yuv420p(progressive), 1920x1080 [SAR 1:1 DAR 16:9], 20 kb/s, 30 fps, 30 tbr, 15360 tbn (default)
  Stream #0:1[0x2](und): Audio: aac (LC) (mp4a / 0x6134706D), 48000 Hz, stereo, fltp, 69 kb/s (default)
At least one output file must be specified"#;

    #[test]
    fn parses_ffmpeg_banner() {
        let info = parse_probe(SAMPLE).unwrap();
        assert_eq!(info.duration_ms, 10_030);
        assert_eq!(info.video, Some((1920, 1080)));
        assert!(info.has_audio);
    }

    #[test]
    fn parses_audio_only() {
        let text = "  Duration: 01:02:03.50, start: 0.0\n  Stream #0:0: Audio: pcm_s16le ([1][0][0][0] / 0x0001), 16000 Hz, 1 channels, s16, 256 kb/s";
        let info = parse_probe(text).unwrap();
        assert_eq!(info.duration_ms, 3_723_500);
        assert_eq!(info.video, None);
    }

    #[test]
    fn missing_duration_is_none() {
        assert!(parse_probe("garbage").is_none());
    }
}
