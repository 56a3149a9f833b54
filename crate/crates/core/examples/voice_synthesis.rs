//! Builds a voice profile from a sample and synthesizes a short script.
//! The clone model fails on slide 2, which falls back to standard TTS.
//!
//! cargo run --example voice_synthesis

use presocoach::audio::synth::tone_silence_wav;
use presocoach::audio::AudioSpec;
use presocoach::progress::PrintProgress;
use presocoach::providers::{Capability, ProviderChain, ProviderConfig};
use presocoach::script::{NarrationScript, ScriptSegment};
use presocoach::store::{BlobStore, MediaKind};
use presocoach::voice::{prepare_voice_profile, Synthesizer};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let blobs = BlobStore::open(dir.path())?;
    let sample = blobs.put(&tone_silence_wav(&[(true, 6000)], 16_000), MediaKind::Wav)?;
    let target = AudioSpec::default();
    let profile = prepare_voice_profile(&blobs, &sample, target, 5000, None).await?;
    println!(
        "voice profile: {:?}, {} ms",
        profile.status, profile.sample_duration_ms
    );

    let script = NarrationScript {
        deck_id: "demo".into(),
        segments: vec![
            ScriptSegment::new(1, "Good morning and thanks for joining the review.", 1),
            ScriptSegment::new(
                2,
                "Spending stayed within budget for the third quarter running.",
                1,
            ),
            ScriptSegment::new(3, "Next we will hire two engineers and ship the beta.", 1),
        ],
        generation_prompt_digest: String::new(),
    };

    let mut clone = ProviderConfig::stub(Capability::TtsClone, "stub-voice-clone");
    clone.endpoint = "stub://default?fail_slides=2".into();
    let chain = ProviderChain::from_config(
        &clone.with_fallback(ProviderConfig::stub(Capability::TtsStandard, "stub-tts")),
    )?;
    let synth = Synthesizer {
        chain: &chain,
        blobs: &blobs,
        media: None,
        target,
    };
    let progress = PrintProgress {
        names: vec!["Synthesizing audio track"],
    };
    let segments = synth
        .synthesize_batch(&script, &profile, 2, &progress, 0)
        .await?;
    for s in &segments {
        println!(
            "slide {}: {} ms, {:?} via {}",
            s.segment.slide_index,
            s.segment.duration_ms,
            s.segment.synthesis_mode,
            s.audit.provider_used
        );
    }
    Ok(())
}
