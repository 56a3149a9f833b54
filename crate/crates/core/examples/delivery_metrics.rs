//! Pause detection and delivery metrics on a synthetic recording with two
//! long pauses and a transcript containing fillers.
//!
//! cargo run --example delivery_metrics

use presocoach::audio::synth::tone_silence_wav;
use presocoach::coach::{compute_delivery_metrics, FillerLexicon, PauseParams, Transcript};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wav = tone_silence_wav(
        &[
            (true, 4000),
            (false, 900),
            (true, 5000),
            (false, 400),
            (true, 3000),
        ],
        16_000,
    );
    let transcript = Transcript::evenly_spaced(
        "so um the results were like better than we expected and you know the team shipped early \
         which uh matters because the launch depends on it",
        13_300,
    );
    let m = compute_delivery_metrics(
        &transcript,
        &wav,
        &FillerLexicon::default(),
        &PauseParams::default(),
        Some(12_000),
    )?;
    println!("{}", m.summary_line());
    for p in &m.pauses {
        println!(
            "  pause {}..{} ms ({} ms)",
            p.start_ms,
            p.end_ms,
            p.duration_ms()
        );
    }
    Ok(())
}
