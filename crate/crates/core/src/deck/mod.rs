//! Slide deck ingestion: package validation, text/notes extraction in
//! presentation order, and rendering to PNG through an external renderer.

mod ooxml;
pub mod render;

use serde::{Deserialize, Serialize};

use crate::store::{BlobRef, BlobStore, MediaKind};
pub use render::{
    render_slides, CommandRenderer, ExternalRenderer, RenderOptions, RenderPool, RenderedSlide,
    TestRenderer, UndersizePolicy,
};

/// Default upload cap for decks.
pub const DEFAULT_MAX_DECK_BYTES: u64 = 50 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum DeckError {
    #[error("upload is not a ZIP package")]
    NotZip,
    #[error("legacy binary .ppt files are not supported; save the deck as .pptx")]
    LegacyPpt,
    #[error("package is missing part {0}")]
    MissingPart(String),
    #[error("presentation contains no slides")]
    ZeroSlides,
    #[error("deck is {size} bytes, above the {max} byte limit")]
    Oversize { size: u64, max: u64 },
    #[error("malformed presentation: {0}")]
    Malformed(String),
    #[error("renderer failed: {stderr}")]
    Renderer { stderr: String },
    #[error("renderer produced {got} images for {expected} slides")]
    Integrity { expected: usize, got: usize },
    #[error(
        "slide {index} rendered at {width}x{height}, below the {min_width}x{min_height} minimum"
    )]
    Resolution {
        index: usize,
        width: u32,
        height: u32,
        min_width: u32,
        min_height: u32,
    },
    #[error("slide {index} image does not decode: {reason}")]
    BadImage { index: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeckInfo {
    pub slide_count: usize,
    pub total_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slide {
    /// 1-based position in the presentation.
    pub index: usize,
    pub title: Option<String>,
    pub body_texts: Vec<String>,
    pub notes: Option<String>,
    pub image_ref: Option<BlobRef>,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
    /// Set when this slide's XML could not be read; other slides are unaffected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl Slide {
    /// Title, body texts and notes flattened for prompting.
    pub fn text_context(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.title {
            out.push_str(&format!("Title: {t}\n"));
        }
        for b in &self.body_texts {
            out.push_str(b);
            out.push('\n');
        }
        out.trim_end().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideDeck {
    pub id: String,
    pub source_ref: BlobRef,
    pub slide_count: usize,
    pub slides: Vec<Slide>,
}

impl SlideDeck {
    pub fn new(id: String, source_ref: BlobRef, slides: Vec<Slide>) -> Result<Self, DeckError> {
        if slides.is_empty() {
            return Err(DeckError::ZeroSlides);
        }
        if slides.iter().enumerate().any(|(i, s)| s.index != i + 1) {
            return Err(DeckError::Malformed(
                "slide indices must be 1..N without gaps".into(),
            ));
        }
        Ok(Self {
            id,
            source_ref,
            slide_count: slides.len(),
            slides,
        })
    }

    pub fn is_rendered(&self) -> bool {
        self.slides.iter().all(|s| s.image_ref.is_some())
    }
}

const OLE_MAGIC: [u8; 8] = [0xD0, 0xCF, 0x11, 0xE0, 0xA1, 0xB1, 0x1A, 0xE1];

/// Checks that `bytes` is a PresentationML package with at least one slide.
pub fn validate_deck(bytes: &[u8], max_bytes: u64) -> Result<DeckInfo, DeckError> {
    let total_bytes = bytes.len() as u64;
    if total_bytes > max_bytes {
        return Err(DeckError::Oversize {
            size: total_bytes,
            max: max_bytes,
        });
    }
    if bytes.starts_with(&OLE_MAGIC) {
        return Err(DeckError::LegacyPpt);
    }
    let mut pkg = ooxml::open_package(bytes)?;
    let pres = ooxml::read_part(&mut pkg, "ppt/presentation.xml")?;
    let ids = ooxml::slide_id_list(&pres)?;
    if ids.is_empty() {
        return Err(DeckError::ZeroSlides);
    }
    Ok(DeckInfo {
        slide_count: ids.len(),
        total_bytes,
    })
}

/// Text metadata for every slide, ordered by the presentation's slide-id
/// list. A slide whose XML is unreadable is returned with `parse_error` set.
pub fn extract_slides(bytes: &[u8]) -> Result<Vec<Slide>, DeckError> {
    let mut pkg = ooxml::open_package(bytes)?;
    let parts = ooxml::ordered_slide_parts(&mut pkg)?;
    if parts.is_empty() {
        return Err(DeckError::ZeroSlides);
    }
    let mut slides = Vec::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        let mut slide = Slide {
            index: i + 1,
            title: None,
            body_texts: Vec::new(),
            notes: None,
            image_ref: None,
            image_width: None,
            image_height: None,
            parse_error: None,
        };
        match read_slide(&mut pkg, part) {
            Ok((text, notes)) => {
                slide.title = text.title;
                slide.body_texts = text.body_texts;
                slide.notes = notes;
            }
            Err(e) => slide.parse_error = Some(e.to_string()),
        }
        slides.push(slide);
    }
    Ok(slides)
}

/// Validates the package, stores it and extracts slide text. Images are
/// attached later by [`apply_renders`].
pub fn ingest_deck(
    bytes: &[u8],
    blobs: &BlobStore,
    max_bytes: u64,
) -> Result<SlideDeck, DeckError> {
    validate_deck(bytes, max_bytes)?;
    let slides = extract_slides(bytes)?;
    let source_ref = blobs.put(bytes, MediaKind::Pptx)?;
    SlideDeck::new(crate::ids::new_id(), source_ref, slides)
}

pub fn apply_renders(deck: &mut SlideDeck, rendered: Vec<RenderedSlide>) -> Result<(), DeckError> {
    if rendered.len() != deck.slide_count {
        return Err(DeckError::Integrity {
            expected: deck.slide_count,
            got: rendered.len(),
        });
    }
    for r in rendered {
        let slide = &mut deck.slides[r.index - 1];
        slide.image_ref = Some(r.image);
        slide.image_width = Some(r.width);
        slide.image_height = Some(r.height);
    }
    Ok(())
}

fn read_slide(
    pkg: &mut ooxml::Package,
    part: &str,
) -> Result<(ooxml::SlideText, Option<String>), DeckError> {
    let xml = ooxml::read_part(pkg, part)?;
    let text = ooxml::slide_text(&xml, part)?;
    let rels_path = ooxml::rels_path_for(part);
    let notes = match ooxml::read_part(pkg, &rels_path) {
        Ok(rels_xml) => {
            let rels = ooxml::parse_rels(&rels_xml, &rels_path)?;
            let notes_part = rels
                .values()
                .find(|r| r.rel_type.ends_with("/notesSlide"))
                .map(|r| ooxml::resolve_target(ooxml::dir_of(part), &r.target));
            match notes_part {
                Some(np) => {
                    let nx = ooxml::read_part(pkg, &np)?;
                    ooxml::notes_text(&nx, &np)?
                }
                None => None,
            }
        }
        Err(DeckError::MissingPart(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((text, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::pptx::{DeckFixture, SlideFixture};

    #[test]
    fn minimal_one_slide_deck() {
        let bytes = DeckFixture::new(vec![SlideFixture::titled("Hello", &["World"])]).build();
        let info = validate_deck(&bytes, DEFAULT_MAX_DECK_BYTES).unwrap();
        assert_eq!(info.slide_count, 1);
        assert_eq!(info.total_bytes, bytes.len() as u64);
    }

    #[test]
    fn random_bytes_are_not_a_zip() {
        assert!(matches!(
            validate_deck(b"definitely not a zip archive", DEFAULT_MAX_DECK_BYTES),
            Err(DeckError::NotZip)
        ));
    }

    #[test]
    fn zip_without_presentation_part() {
        let bytes = crate::testing::pptx::zip_of(&[("docProps/app.xml", b"<x/>".as_slice())]);
        assert!(matches!(
            validate_deck(&bytes, DEFAULT_MAX_DECK_BYTES),
            Err(DeckError::MissingPart(p)) if p == "ppt/presentation.xml"
        ));
    }

    #[test]
    fn zero_slides_and_oversize_and_legacy() {
        let bytes = DeckFixture::new(vec![]).build();
        assert!(matches!(
            validate_deck(&bytes, DEFAULT_MAX_DECK_BYTES),
            Err(DeckError::ZeroSlides)
        ));
        let ok = DeckFixture::new(vec![SlideFixture::titled("a", &[])]).build();
        assert!(matches!(
            validate_deck(&ok, 10),
            Err(DeckError::Oversize { .. })
        ));
        let mut legacy = OLE_MAGIC.to_vec();
        legacy.extend_from_slice(&[0; 64]);
        assert!(matches!(
            validate_deck(&legacy, DEFAULT_MAX_DECK_BYTES),
            Err(DeckError::LegacyPpt)
        ));
    }

    #[test]
    fn order_follows_id_list_not_file_names() {
        // Physically slide2.xml is listed first in the id list and stored first.
        let bytes = DeckFixture::new(vec![
            SlideFixture::titled("First", &["alpha"]),
            SlideFixture::titled("Second", &["beta"]),
        ])
        .reversed_storage()
        .build();
        let slides = extract_slides(&bytes).unwrap();
        assert_eq!(slides.len(), 2);
        assert_eq!(slides[0].index, 1);
        assert_eq!(slides[0].title.as_deref(), Some("First"));
        assert_eq!(slides[1].title.as_deref(), Some("Second"));
    }

    #[test]
    fn empty_slide_and_notes() {
        let bytes = DeckFixture::new(vec![
            SlideFixture::empty(),
            SlideFixture::titled("Budget", &["Numbers"])
                .with_notes("Remember to mention the budget"),
        ])
        .build();
        let slides = extract_slides(&bytes).unwrap();
        assert!(slides[0].body_texts.is_empty());
        assert!(slides[0].title.is_none());
        assert!(slides[1]
            .notes
            .as_deref()
            .unwrap()
            .contains("mention the budget"));
    }

    #[test]
    fn malformed_slide_is_reported_per_slide() {
        let bytes = DeckFixture::new(vec![
            SlideFixture::titled("ok", &[]),
            SlideFixture::raw("<p:sld><p:cSld><p:sp><a:t>broken</p:cSld>"),
        ])
        .build();
        let slides = extract_slides(&bytes).unwrap();
        assert!(slides[0].parse_error.is_none());
        assert!(slides[1].parse_error.is_some());
    }

    #[test]
    fn extraction_is_deterministic() {
        let bytes = crate::testing::pptx::three_slide_deck();
        assert_eq!(
            extract_slides(&bytes).unwrap(),
            extract_slides(&bytes).unwrap()
        );
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]
            #[test]
            fn mutations_never_panic(pos in any::<proptest::sample::Index>(), val in any::<u8>()) {
                let mut bytes = crate::testing::pptx::three_slide_deck();
                let i = pos.index(bytes.len());
                bytes[i] = val;
                if validate_deck(&bytes, DEFAULT_MAX_DECK_BYTES).is_ok() {
                    let _ = extract_slides(&bytes);
                }
            }
        }
    }
}
