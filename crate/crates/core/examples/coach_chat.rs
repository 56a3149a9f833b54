//! Coach chat grounded in the latest analysis. Shows the context the chat
//! model receives under a character budget. Needs ffmpeg.
//!
//! cargo run --example coach_chat

use presocoach::audio::synth::tone_silence_wav;
use presocoach::chat::{build_chat_context, load_reports, send_message, ChatGate};
use presocoach::config::Config;
use presocoach::headless::{analyze_recording, run_pipeline, SessionPointer};
use presocoach::progress::NoProgress;
use presocoach::store::Store;
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
        tone_silence_wav(&[(true, 7000), (false, 900), (true, 6000)], 16_000),
    )?;
    let config = Config::default();
    let out = dir.path().join("session");
    run_pipeline(&config, &deck, &voice, "", &out, &NoProgress).await?;
    analyze_recording(&config, &out, &practice, None, &NoProgress).await?;

    let pointer: SessionPointer =
        serde_json::from_slice(&std::fs::read(out.join("session.json"))?)?;
    let store = Store::open(out.join(&pointer.store))?;
    let providers = config.providers.build()?;
    let gate = ChatGate::default();
    for question in ["What went well?", "What should I change before Friday?"] {
        let reply = send_message(
            &store,
            &providers.llm_chat,
            &gate,
            &pointer.session_id,
            question,
            config.chat_budget_chars,
        )
        .await?;
        println!("you:   {question}\ncoach: {}\n", reply.content);
    }

    let session = store.load_session(&pointer.session_id)?;
    let reports = load_reports(&store, &pointer.session_id)?;
    let ctx = build_chat_context(&session.chat_history, &reports, 2500);
    println!(
        "with a 2500-character budget: {} report(s), {} message(s) kept",
        ctx.included_reports.len(),
        ctx.included_messages.len()
    );
    Ok(())
}
