//! Exemplar video assembly: one still-image segment per slide, losslessly
//! concatenated, plus the slide-to-time manifest.

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::audio::{synth, wav};
use crate::media::{MediaError, MediaToolchain, VideoSpec};
use crate::store::{BlobRef, BlobStore, MediaKind, StoreError};
use crate::voice::AudioSegment;

/// Allowed probe disagreement for one segment.
pub const SEGMENT_TOLERANCE_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub slide_index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarVideo {
    pub video_ref: BlobRef,
    pub manifest: Vec<TimelineEntry>,
    pub total_duration_ms: u64,
    pub resolution: Resolution,
    pub fps: u32,
    /// Duration reported by the prober for the concatenated file.
    pub probed_duration_ms: u64,
}

/// Prefix sums of `durations`. `gap_ms` of silence is appended to every
/// slide but the last, so entries stay contiguous.
pub fn build_manifest(durations: &[u64], gap_ms: u64) -> Vec<TimelineEntry> {
    let mut start = 0;
    let n = durations.len();
    durations
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let span = d + if i + 1 < n { gap_ms } else { 0 };
            let e = TimelineEntry {
                slide_index: i + 1,
                start_ms: start,
                end_ms: start + span,
            };
            start += span;
            e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineViolation {
    Empty,
    NonZeroStart { start_ms: u64 },
    NonPositiveSpan { slide_index: usize },
    OutOfOrder { position: usize, slide_index: usize },
    Gap { after_slide: usize, gap_ms: u64 },
    Overlap { after_slide: usize, overlap_ms: u64 },
}

pub fn validate_timeline(manifest: &[TimelineEntry]) -> Result<(), Vec<TimelineViolation>> {
    let mut v = Vec::new();
    match manifest.first() {
        None => v.push(TimelineViolation::Empty),
        Some(first) if first.start_ms != 0 => v.push(TimelineViolation::NonZeroStart {
            start_ms: first.start_ms,
        }),
        _ => {}
    }
    for (i, e) in manifest.iter().enumerate() {
        if e.slide_index != i + 1 {
            v.push(TimelineViolation::OutOfOrder {
                position: i + 1,
                slide_index: e.slide_index,
            });
        }
        if e.end_ms <= e.start_ms {
            v.push(TimelineViolation::NonPositiveSpan {
                slide_index: e.slide_index,
            });
        }
    }
    for w in manifest.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.start_ms > a.end_ms {
            v.push(TimelineViolation::Gap {
                after_slide: a.slide_index,
                gap_ms: b.start_ms - a.end_ms,
            });
        } else if b.start_ms < a.end_ms {
            v.push(TimelineViolation::Overlap {
                after_slide: a.slide_index,
                overlap_ms: a.end_ms - b.start_ms,
            });
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Slide shown at `t_ms`; a boundary belongs to the later slide.
pub fn slide_at(manifest: &[TimelineEntry], t_ms: u64) -> Option<usize> {
    manifest
        .iter()
        .find(|e| e.start_ms <= t_ms && t_ms < e.end_ms)
        .map(|e| e.slide_index)
}

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("nothing to assemble")]
    Empty,
    #[error("slide {0} has zero-length audio")]
    ZeroDuration(usize),
    #[error(
        "segments must cover slides 1..N in order; found slide {found} at position {position}"
    )]
    BadOrder { position: usize, found: usize },
    #[error("slide {slide_index}: media toolchain failed: {source}")]
    Toolchain {
        slide_index: usize,
        #[source]
        source: MediaError,
    },
    #[error("concatenation failed: {0}")]
    Concat(#[source] MediaError),
    #[error("slide {slide_index}: video is {probed_ms} ms but the audio is {expected_ms} ms")]
    Sync {
        slide_index: usize,
        expected_ms: u64,
        probed_ms: u64,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SegmentVideo {
    pub slide_index: usize,
    pub path: PathBuf,
    pub duration_ms: u64,
    pub probed_ms: u64,
}

/// Encodes the slide image for the audio's duration (plus `pad_ms` of
/// trailing silence) into `work_dir`.
pub async fn compose_slide_segment(
    media: &MediaToolchain,
    blobs: &BlobStore,
    image: &BlobRef,
    audio: &AudioSegment,
    spec: VideoSpec,
    pad_ms: u64,
    work_dir: &Path,
) -> Result<SegmentVideo, AssemblyError> {
    let slide_index = audio.slide_index;
    if audio.duration_ms == 0 {
        return Err(AssemblyError::ZeroDuration(slide_index));
    }
    let image_path = work_dir.join(format!("slide-{slide_index}.png"));
    let audio_path = work_dir.join(format!("slide-{slide_index}.wav"));
    let out = work_dir.join(format!("segment-{slide_index}.mp4"));
    tokio::fs::write(&image_path, blobs.get(image)?).await?;
    let mut audio_bytes = blobs.get(&audio.audio_ref)?;
    if pad_ms > 0 {
        audio_bytes = pad_wav(&audio_bytes, pad_ms).map_err(|e| AssemblyError::Toolchain {
            slide_index,
            source: MediaError::Probe {
                path: audio_path.display().to_string(),
                reason: e.to_string(),
            },
        })?;
    }
    tokio::fs::write(&audio_path, &audio_bytes).await?;
    let duration_ms = audio.duration_ms + pad_ms;
    let tool = |source| AssemblyError::Toolchain {
        slide_index,
        source,
    };
    media
        .compose_still(&image_path, &audio_path, &out, spec, duration_ms)
        .await
        .map_err(tool)?;
    let probed_ms = media.probe(&out).await.map_err(tool)?.duration_ms;
    if probed_ms.abs_diff(duration_ms) > SEGMENT_TOLERANCE_MS {
        return Err(AssemblyError::Sync {
            slide_index,
            expected_ms: duration_ms,
            probed_ms,
        });
    }
    Ok(SegmentVideo {
        slide_index,
        path: out,
        duration_ms,
        probed_ms,
    })
}

fn pad_wav(bytes: &[u8], pad_ms: u64) -> Result<Vec<u8>, wav::WavError> {
    let info = wav::parse(bytes)?;
    if info.bits_per_sample != 16 {
        return Err(wav::WavError::UnsupportedBits(info.bits_per_sample));
    }
    let data = &bytes[info.data_offset..info.data_offset + info.data_len];
    let mut samples: Vec<i16> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    samples.extend(synth::silence(
        synth::frames_for_ms(pad_ms, info.sample_rate) * info.channels as usize,
    ));
    Ok(wav::encode_i16(info.sample_rate, info.channels, &samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub gap_ms: u64,
    pub parallelism: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            gap_ms: 0,
            parallelism: 2,
        }
    }
}

/// Builds the exemplar from `(slide image, audio)` pairs in slide order.
pub async fn assemble_exemplar(
    media: &MediaToolchain,
    blobs: &BlobStore,
    segments: &[(BlobRef, AudioSegment)],
    spec: VideoSpec,
    opts: AssemblyOptions,
) -> Result<ExemplarVideo, AssemblyError> {
    if segments.is_empty() {
        return Err(AssemblyError::Empty);
    }
    for (i, (_, a)) in segments.iter().enumerate() {
        if a.slide_index != i + 1 {
            return Err(AssemblyError::BadOrder {
                position: i + 1,
                found: a.slide_index,
            });
        }
        if a.duration_ms == 0 {
            return Err(AssemblyError::ZeroDuration(a.slide_index));
        }
    }
    let durations: Vec<u64> = segments.iter().map(|(_, a)| a.duration_ms).collect();
    let manifest = build_manifest(&durations, opts.gap_ms);
    let n = segments.len();

    let work = tempfile::Builder::new().prefix("assemble-").tempdir()?;
    let dir = work.path();
    let jobs: Vec<_> = segments
        .iter()
        .enumerate()
        .map(|(i, (image, audio))| {
            let pad = if i + 1 < n { opts.gap_ms } else { 0 };
            compose_slide_segment(media, blobs, image, audio, spec, pad, dir)
        })
        .collect();
    let mut parts: Vec<SegmentVideo> = stream::iter(jobs)
        .buffer_unordered(opts.parallelism.max(1))
        .try_collect()
        .await?;
    parts.sort_by_key(|p| p.slide_index);

    let out = dir.join("exemplar.mp4");
    let paths: Vec<PathBuf> = parts.iter().map(|p| p.path.clone()).collect();
    media
        .concat(&paths, &out)
        .await
        .map_err(AssemblyError::Concat)?;
    let probe = media.probe(&out).await.map_err(AssemblyError::Concat)?;
    let total = manifest.last().map(|e| e.end_ms).unwrap_or(0);
    if probe.duration_ms.abs_diff(total) > SEGMENT_TOLERANCE_MS * n as u64 {
        return Err(AssemblyError::Sync {
            slide_index: 0,
            expected_ms: total,
            probed_ms: probe.duration_ms,
        });
    }
    let video_ref = blobs.put_file(&out, MediaKind::Mp4)?;
    let (width, height) = probe.video.unwrap_or((spec.width, spec.height));
    Ok(ExemplarVideo {
        video_ref,
        manifest,
        total_duration_ms: total,
        resolution: Resolution { width, height },
        fps: spec.fps,
        probed_duration_ms: probe.duration_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, s: u64, t: u64) -> TimelineEntry {
        TimelineEntry {
            slide_index: i,
            start_ms: s,
            end_ms: t,
        }
    }

    #[test]
    fn manifest_prefix_sums() {
        assert_eq!(
            build_manifest(&[3000, 5000, 2000], 0),
            vec![e(1, 0, 3000), e(2, 3000, 8000), e(3, 8000, 10000)]
        );
        assert_eq!(build_manifest(&[4200], 0), vec![e(1, 0, 4200)]);
        assert_eq!(
            build_manifest(&[1000, 1000], 250),
            vec![e(1, 0, 1250), e(2, 1250, 2250)]
        );
    }

    #[test]
    fn timeline_violations() {
        assert!(validate_timeline(&build_manifest(&[3000, 5000, 2000], 0)).is_ok());
        assert_eq!(
            validate_timeline(&[e(1, 0, 3000), e(2, 3100, 8000)]).unwrap_err(),
            vec![TimelineViolation::Gap {
                after_slide: 1,
                gap_ms: 100
            }]
        );
        assert_eq!(
            validate_timeline(&[e(1, 0, 3000), e(2, 2900, 8000)]).unwrap_err(),
            vec![TimelineViolation::Overlap {
                after_slide: 1,
                overlap_ms: 100
            }]
        );
        assert_eq!(
            validate_timeline(&[]).unwrap_err(),
            vec![TimelineViolation::Empty]
        );
        let bad = validate_timeline(&[e(2, 10, 10)]).unwrap_err();
        assert!(bad.contains(&TimelineViolation::NonZeroStart { start_ms: 10 }));
        assert!(bad.contains(&TimelineViolation::NonPositiveSpan { slide_index: 2 }));
    }

    #[test]
    fn boundary_belongs_to_later_slide() {
        let m = build_manifest(&[3000, 5000], 0);
        assert_eq!(slide_at(&m, 0), Some(1));
        assert_eq!(slide_at(&m, 2999), Some(1));
        assert_eq!(slide_at(&m, 3000), Some(2));
        assert_eq!(slide_at(&m, 3500), Some(2));
        assert_eq!(slide_at(&m, 8000), None);
    }

    #[test]
    fn padding_extends_wav() {
        let w = synth::tone_silence_wav(&[(true, 1000)], 16_000);
        let p = pad_wav(&w, 250).unwrap();
        assert_eq!(crate::audio::measure_duration(&p).unwrap(), 1250);
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn manifest_equals_prefix_sums(durs in proptest::collection::vec(1u64..600_000, 1..40)) {
                let m = build_manifest(&durs, 0);
                prop_assert!(validate_timeline(&m).is_ok());
                let mut acc = 0;
                for (i, d) in durs.iter().enumerate() {
                    prop_assert_eq!(m[i].start_ms, acc);
                    acc += d;
                    prop_assert_eq!(m[i].end_ms, acc);
                }
                prop_assert_eq!(build_manifest(&durs, 0), m);
            }
        }
    }
}
