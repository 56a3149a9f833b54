//! Full exemplar generation into a directory: render, narrate, synthesize
//! and assemble. Needs ffmpeg.
//!
//! cargo run --example exemplar_video -- [out-dir]

use presocoach::audio::synth::tone_silence_wav;
use presocoach::config::Config;
use presocoach::headless::run_pipeline;
use presocoach::pipeline::EXEMPLAR_STEPS;
use presocoach::progress::PrintProgress;
use presocoach::testing::pptx::three_slide_deck;
use presocoach::video::slide_at;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("presocoach-exemplar"));
    let inputs = tempfile::tempdir()?;
    let deck = inputs.path().join("deck.pptx");
    let voice = inputs.path().join("voice.wav");
    std::fs::write(&deck, three_slide_deck())?;
    std::fs::write(&voice, tone_silence_wav(&[(true, 6000)], 16_000))?;

    let progress = PrintProgress {
        names: EXEMPLAR_STEPS.to_vec(),
    };
    let a = run_pipeline(
        &Config::default(),
        &deck,
        &voice,
        "new team members",
        &out,
        &progress,
    )
    .await?;

    println!("\nvideo: {}", out.join("exemplar.mp4").display());
    println!(
        "{}x{} at {} fps, probed {} ms",
        a.video.resolution.width,
        a.video.resolution.height,
        a.video.fps,
        a.video.probed_duration_ms
    );
    for e in &a.video.manifest {
        println!(
            "  slide {} {:>6}..{:>6} ms",
            e.slide_index, e.start_ms, e.end_ms
        );
    }
    let t = a.video.total_duration_ms / 2;
    println!(
        "slide on screen at {t} ms: {:?}",
        slide_at(&a.video.manifest, t)
    );
    Ok(())
}
