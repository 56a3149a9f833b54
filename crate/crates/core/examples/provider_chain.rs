//! A primary that fails transiently falls back to a second model; the
//! outcome records who answered and every attempt made.
//!
//! cargo run --example provider_chain

use presocoach::audio::synth::tone_silence_wav;
use presocoach::providers::request::SynthesizeSpeech;
use presocoach::providers::{Bytes, Capability, ProviderChain, ProviderConfig, ProviderRequest};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut primary = ProviderConfig::stub(Capability::TtsClone, "clone-v1");
    primary.endpoint = "stub://default?fail=transient".into();
    primary.max_retries = 2;
    let config = primary.with_fallback(ProviderConfig::stub(Capability::TtsStandard, "tts-basic"));
    println!(
        "chain config:\n{}\n",
        serde_json::to_string_pretty(&config)?
    );

    let chain = ProviderChain::from_config(&config)?;
    let request = ProviderRequest::Synthesize(SynthesizeSpeech {
        slide_index: 1,
        text: "Welcome to the quarterly review.".into(),
        reference_audio: Some(Bytes(tone_silence_wav(&[(true, 6000)], 16_000))),
        reference_text: Some("The quick brown fox.".into()),
    });
    let outcome = chain.invoke(&request).await?;
    println!(
        "answered by {} (degraded: {})",
        outcome.provider_used, outcome.degraded
    );
    for a in &outcome.log {
        println!(
            "  {} attempt {}: {}",
            a.model,
            a.attempt,
            a.error.as_deref().unwrap_or("ok")
        );
    }
    Ok(())
}
