//! Generates an exemplar, then analyses a practice recording of slides 1-2
//! against it and prints the OIS feedback. Needs ffmpeg.
//!
//! cargo run --example practice_analysis

use presocoach::audio::synth::tone_silence_wav;
use presocoach::coach::{SlideRange, ANALYSIS_STEPS};
use presocoach::config::Config;
use presocoach::headless::{analyze_recording, run_pipeline};
use presocoach::progress::{NoProgress, PrintProgress};
use presocoach::testing::pptx::three_slide_deck;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let deck = dir.path().join("deck.pptx");
    let voice = dir.path().join("voice.wav");
    let practice = dir.path().join("practice.wav");
    std::fs::write(&deck, three_slide_deck())?;
    std::fs::write(&voice, tone_silence_wav(&[(true, 6000)], 16_000))?;
    std::fs::write(
        &practice,
        tone_silence_wav(&[(true, 5000), (false, 1200), (true, 6000)], 16_000),
    )?;

    let config = Config::default();
    let out = dir.path().join("session");
    run_pipeline(&config, &deck, &voice, "", &out, &NoProgress).await?;

    let progress = PrintProgress {
        names: ANALYSIS_STEPS.to_vec(),
    };
    let range = SlideRange {
        from_index: 1,
        to_index: 2,
    };
    let (report, path) =
        analyze_recording(&config, &out, &practice, Some(range), &progress).await?;
    if let Some(m) = &report.metrics {
        println!("\n{}", m.summary_line());
    }
    for n in &report.audience_notes {
        println!("audience ({}): {}", n.audience_profile, n.reaction_summary);
    }
    if let Some(fb) = &report.feedback {
        println!(
            "\n{}\nObservation: {}\nImpact: {}\nSuggestion: {}",
            fb.encouragement(),
            fb.observation(),
            fb.impact(),
            fb.suggestion()
        );
    }
    println!("\nreport written to {}", path.display());
    Ok(())
}
