//! Narrates each slide in order with the offline vision-language stub and
//! prints the length check for every segment.
//!
//! cargo run --example script_generation

use presocoach::deck::{
    apply_renders, ingest_deck, render_slides, RenderOptions, TestRenderer, DEFAULT_MAX_DECK_BYTES,
};
use presocoach::progress::PrintProgress;
use presocoach::providers::{Capability, ProviderChain, ProviderConfig};
use presocoach::script::{generate_script, DEFAULT_REGENERATIONS};
use presocoach::store::BlobStore;
use presocoach::testing::pptx::three_slide_deck;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let blobs = BlobStore::open(dir.path())?;
    let bytes = three_slide_deck();
    let mut deck = ingest_deck(&bytes, &blobs, DEFAULT_MAX_DECK_BYTES)?;
    let renderer = TestRenderer {
        width: 1920,
        height: 1080,
        fail: false,
    };
    apply_renders(
        &mut deck,
        render_slides(&bytes, &renderer, RenderOptions::default(), &blobs)?,
    )?;

    // 45 words per draft: every slide is regenerated, then kept and flagged.
    let mut vlm = ProviderConfig::stub(Capability::VlmScript, "stub-vlm");
    vlm.endpoint = "stub://default?words=45".into();
    let chain = ProviderChain::from_config(&vlm)?;
    let progress = PrintProgress {
        names: vec!["Generating narration script"],
    };
    let run = generate_script(
        &deck,
        "board members",
        &chain,
        &blobs,
        DEFAULT_REGENERATIONS,
        &progress,
        0,
    )
    .await?;

    for s in &run.script.segments {
        println!(
            "\nslide {} ({} words, {:?}, revision {}):\n{}",
            s.slide_index, s.word_count, s.length_flag, s.revision, s.text
        );
    }
    println!(
        "\n{} provider calls, digest {}",
        run.audits.len(),
        run.script.generation_prompt_digest
    );
    Ok(())
}
