//! Reads a .pptx (or a built-in three-slide deck), renders previews with the
//! test renderer and prints what narration will be based on.
//!
//! cargo run --example deck_ingest -- [deck.pptx]

use presocoach::deck::{
    apply_renders, ingest_deck, render_slides, RenderOptions, TestRenderer, DEFAULT_MAX_DECK_BYTES,
};
use presocoach::store::BlobStore;
use presocoach::testing::pptx::three_slide_deck;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(path)?,
        None => three_slide_deck(),
    };
    let dir = tempfile::tempdir()?;
    let blobs = BlobStore::open(dir.path())?;

    let mut deck = ingest_deck(&bytes, &blobs, DEFAULT_MAX_DECK_BYTES)?;
    let renderer = TestRenderer {
        width: 1920,
        height: 1080,
        fail: false,
    };
    let rendered = render_slides(&bytes, &renderer, RenderOptions::default(), &blobs)?;
    apply_renders(&mut deck, rendered)?;

    println!("{} slides", deck.slide_count);
    for s in &deck.slides {
        println!(
            "\n#{} {} ({}x{})",
            s.index,
            s.title.as_deref().unwrap_or("(untitled)"),
            s.image_width.unwrap_or(0),
            s.image_height.unwrap_or(0)
        );
        for b in &s.body_texts {
            println!("  - {b}");
        }
        if let Some(n) = &s.notes {
            println!("  notes: {n}");
        }
        if let Some(e) = &s.parse_error {
            println!("  unreadable: {e}");
        }
    }
    Ok(())
}
