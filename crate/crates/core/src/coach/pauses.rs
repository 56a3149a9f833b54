//! Silence segmentation over frame RMS.
//!
//! Frames of `frame_ms` advance by `hop_ms`; a frame is silent when its RMS
//! is below the dBFS threshold. Each run of silent frames is then refined to
//! sample precision: the boundary moves to the nearest sample whose
//! magnitude reaches the threshold, searched within one frame of the run
//! edge. Runs touching the start or end of the audio extend to it.

use serde::{Deserialize, Serialize};

use crate::audio::{wav, WavError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PauseParams {
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub silence_threshold_dbfs: f64,
    pub min_pause_ms: u64,
}

impl Default for PauseParams {
    fn default() -> Self {
        Self {
            frame_ms: 25,
            hop_ms: 10,
            silence_threshold_dbfs: -35.0,
            min_pause_ms: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pause {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Pause {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

pub fn detect_pauses(audio: &[u8], params: &PauseParams) -> Result<Vec<Pause>, WavError> {
    let (info, samples) = wav::decode_mono(audio)?;
    Ok(detect_in_samples(&samples, info.sample_rate, params))
}

fn to_ms(sample: usize, rate: u32) -> u64 {
    (sample as u64 * 1000 + rate as u64 / 2) / rate as u64
}

pub(crate) fn detect_in_samples(samples: &[f32], rate: u32, params: &PauseParams) -> Vec<Pause> {
    let frame = (rate as usize * params.frame_ms as usize / 1000).max(1);
    let hop = (rate as usize * params.hop_ms as usize / 1000).max(1);
    let n = samples.len();
    if n < frame {
        return Vec::new();
    }
    let threshold = 10f64.powf(params.silence_threshold_dbfs / 20.0);
    let limit = threshold * threshold * frame as f64;
    let frame_count = (n - frame) / hop + 1;
    let silent: Vec<bool> = (0..frame_count)
        .map(|i| {
            let s = &samples[i * hop..i * hop + frame];
            let energy: f64 = s.iter().map(|&x| x as f64 * x as f64).sum();
            energy < limit
        })
        .collect();
    let loud = |x: f32| (x as f64).abs() >= threshold;

    let mut pauses = Vec::new();
    let mut i = 0;
    while i < frame_count {
        if !silent[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < frame_count && silent[j + 1] {
            j += 1;
        }
        let core_start = i * hop;
        let core_end = if j + 1 == frame_count {
            n
        } else {
            j * hop + frame
        };

        let start = if i == 0 {
            0
        } else {
            let lo = core_start.saturating_sub(frame);
            let hi = (core_start + frame).min(core_end);
            match (lo..hi).rev().find(|&k| loud(samples[k])) {
                Some(k) => k + 1,
                None if lo == 0 => 0,
                None => core_start,
            }
        };
        let end = if core_end == n {
            n
        } else {
            let lo = core_end.saturating_sub(frame).max(start);
            let hi = (core_end + frame).min(n);
            match (lo..hi).find(|&k| loud(samples[k])) {
                Some(k) => k,
                None if hi == n => n,
                None => core_end,
            }
        };
        if end > start {
            let p = Pause {
                start_ms: to_ms(start, rate),
                end_ms: to_ms(end, rate),
            };
            if p.duration_ms() >= params.min_pause_ms {
                pauses.push(p);
            }
        }
        i = j + 1;
    }
    pauses
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth::tone_silence_wav;

    fn run(spans: &[(bool, u64)]) -> Vec<Pause> {
        detect_pauses(&tone_silence_wav(spans, 16_000), &PauseParams::default()).unwrap()
    }

    #[test]
    fn pure_tone_has_no_pauses() {
        assert!(run(&[(true, 2000)]).is_empty());
    }

    #[test]
    fn single_gap_is_found() {
        let p = run(&[(true, 1000), (false, 500), (true, 1000)]);
        assert_eq!(p.len(), 1);
        assert!(p[0].start_ms.abs_diff(1000) <= 10, "{p:?}");
        assert!(p[0].end_ms.abs_diff(1500) <= 10, "{p:?}");
    }

    #[test]
    fn short_gap_is_ignored() {
        assert!(run(&[(true, 1000), (false, 200), (true, 1000)]).is_empty());
    }

    #[test]
    fn leading_and_trailing_silence_count() {
        let p = run(&[(false, 400), (true, 1000), (false, 350)]);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].start_ms, 0);
        assert!(p[0].end_ms.abs_diff(400) <= 10);
        assert_eq!(p[1].end_ms, 1750);
        assert!(p[1].start_ms.abs_diff(1400) <= 10);
    }

    #[test]
    fn all_silence_is_one_pause() {
        let p = run(&[(false, 1000)]);
        assert_eq!(
            p,
            vec![Pause {
                start_ms: 0,
                end_ms: 1000
            }]
        );
    }

    #[test]
    fn shorter_than_a_frame() {
        assert!(run(&[(false, 10)]).is_empty());
    }
}
