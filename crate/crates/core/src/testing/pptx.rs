//! Builds small PresentationML packages in memory.

use std::io::{Cursor, Write};
use zip::write::SimpleFileOptions;

const NS: &str = r#"xmlns:a="http://schemas.openxmlformats.org/drawingml/2006/main" xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships" xmlns:p="http://schemas.openxmlformats.org/presentationml/2006/main""#;
const REL_SLIDE: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships/slide";
const REL_NOTES: &str =
    "http://schemas.openxmlformats.org/officeDocument/2006/relationships/notesSlide";
const REL_OFFICE: &str =
    "http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument";

#[derive(Debug, Clone)]
pub struct SlideFixture {
    title: Option<String>,
    bodies: Vec<String>,
    notes: Option<String>,
    raw: Option<String>,
}

impl SlideFixture {
    pub fn titled(title: &str, bodies: &[&str]) -> Self {
        Self {
            title: Some(title.to_string()),
            bodies: bodies.iter().map(|b| b.to_string()).collect(),
            notes: None,
            raw: None,
        }
    }

    pub fn empty() -> Self {
        Self {
            title: None,
            bodies: Vec::new(),
            notes: None,
            raw: None,
        }
    }

    /// Slide part with verbatim XML, for malformed-input tests.
    pub fn raw(xml: &str) -> Self {
        Self {
            raw: Some(xml.to_string()),
            ..Self::empty()
        }
    }

    pub fn with_notes(mut self, notes: &str) -> Self {
        self.notes = Some(notes.to_string());
        self
    }

    fn shape(id: usize, ph: Option<&str>, text: &str) -> String {
        let ph = ph
            .map(|t| format!(r#"<p:nvPr><p:ph type="{t}"/></p:nvPr>"#))
            .unwrap_or_else(|| "<p:nvPr/>".into());
        let paras: String = text
            .split('\n')
            .map(|p| {
                format!(
                    "<a:p><a:r><a:rPr lang=\"en-US\"/><a:t>{}</a:t></a:r></a:p>",
                    escape(p)
                )
            })
            .collect();
        format!(
            r#"<p:sp><p:nvSpPr><p:cNvPr id="{id}" name="Shape {id}"/><p:cNvSpPr/>{ph}</p:nvSpPr><p:spPr/><p:txBody><a:bodyPr/><a:lstStyle/>{paras}</p:txBody></p:sp>"#
        )
    }

    fn slide_xml(&self) -> String {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let mut shapes = String::new();
        let mut id = 2;
        if let Some(t) = &self.title {
            shapes.push_str(&Self::shape(id, Some("title"), t));
            id += 1;
        }
        for b in &self.bodies {
            shapes.push_str(&Self::shape(id, None, b));
            id += 1;
        }
        format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><p:sld {NS}><p:cSld><p:spTree><p:nvGrpSpPr><p:cNvPr id="1" name=""/><p:cNvGrpSpPr/><p:nvPr/></p:nvGrpSpPr><p:grpSpPr/>{shapes}</p:spTree></p:cSld></p:sld>"#
        )
    }

    fn notes_xml(&self) -> Option<String> {
        let notes = self.notes.as_ref()?;
        Some(format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><p:notes {NS}><p:cSld><p:spTree><p:nvGrpSpPr><p:cNvPr id="1" name=""/><p:cNvGrpSpPr/><p:nvPr/></p:nvGrpSpPr><p:grpSpPr/>{}{}</p:spTree></p:cSld></p:notes>"#,
            Self::shape(2, Some("sldImg"), ""),
            Self::shape(3, Some("body"), notes)
        ))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone)]
pub struct DeckFixture {
    slides: Vec<SlideFixture>,
    reversed: bool,
}

impl DeckFixture {
    pub fn new(slides: Vec<SlideFixture>) -> Self {
        Self {
            slides,
            reversed: false,
        }
    }

    /// Stores slide `i` under file `slide{N-i+1}.xml` and writes the files
    /// in file-name order, so file order disagrees with presentation order.
    pub fn reversed_storage(mut self) -> Self {
        self.reversed = true;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let n = self.slides.len();
        let file_no = |i: usize| if self.reversed { n - i } else { i + 1 };

        let mut parts: Vec<(String, Vec<u8>)> = Vec::new();
        let mut overrides = String::new();
        let mut sld_ids = String::new();
        let mut pres_rels = String::new();
        for i in 0..n {
            let f = file_no(i);
            sld_ids.push_str(&format!(
                r#"<p:sldId id="{}" r:id="rId{}"/>"#,
                256 + i,
                10 + i
            ));
            pres_rels.push_str(&format!(
                r#"<Relationship Id="rId{}" Type="{REL_SLIDE}" Target="slides/slide{f}.xml"/>"#,
                10 + i
            ));
            overrides.push_str(&format!(
                r#"<Override PartName="/ppt/slides/slide{f}.xml" ContentType="application/vnd.openxmlformats-officedocument.presentationml.slide+xml"/>"#
            ));
        }
        let mut slide_files: Vec<(usize, &SlideFixture)> = self
            .slides
            .iter()
            .enumerate()
            .map(|(i, s)| (file_no(i), s))
            .collect();
        slide_files.sort_by_key(|(f, _)| std::cmp::Reverse(*f));
        if !self.reversed {
            slide_files.reverse();
        }
        for (f, s) in slide_files {
            parts.push((
                format!("ppt/slides/slide{f}.xml"),
                s.slide_xml().into_bytes(),
            ));
            if let Some(notes) = s.notes_xml() {
                parts.push((
                    format!("ppt/slides/_rels/slide{f}.xml.rels"),
                    format!(
                        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId2" Type="{REL_NOTES}" Target="../notesSlides/notesSlide{f}.xml"/></Relationships>"#
                    )
                    .into_bytes(),
                ));
                parts.push((
                    format!("ppt/notesSlides/notesSlide{f}.xml"),
                    notes.into_bytes(),
                ));
                overrides.push_str(&format!(
                    r#"<Override PartName="/ppt/notesSlides/notesSlide{f}.xml" ContentType="application/vnd.openxmlformats-officedocument.presentationml.notesSlide+xml"/>"#
                ));
            }
        }

        let content_types = format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/ppt/presentation.xml" ContentType="application/vnd.openxmlformats-officedocument.presentationml.presentation.main+xml"/>{overrides}</Types>"#
        );
        let root_rels = format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="{REL_OFFICE}" Target="ppt/presentation.xml"/></Relationships>"#
        );
        let presentation = format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><p:presentation {NS}><p:sldIdLst>{sld_ids}</p:sldIdLst><p:sldSz cx="12192000" cy="6858000"/><p:notesSz cx="6858000" cy="9144000"/></p:presentation>"#
        );
        let presentation_rels = format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">{pres_rels}</Relationships>"#
        );

        let mut all: Vec<(String, Vec<u8>)> = vec![
            ("[Content_Types].xml".into(), content_types.into_bytes()),
            ("_rels/.rels".into(), root_rels.into_bytes()),
            ("ppt/presentation.xml".into(), presentation.into_bytes()),
            (
                "ppt/_rels/presentation.xml.rels".into(),
                presentation_rels.into_bytes(),
            ),
        ];
        all.extend(parts);
        let refs: Vec<(&str, &[u8])> = all
            .iter()
            .map(|(n, b)| (n.as_str(), b.as_slice()))
            .collect();
        zip_of(&refs)
    }
}

pub fn zip_of(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    for (name, bytes) in entries {
        w.start_file(*name, opts).expect("zip entry");
        w.write_all(bytes).expect("zip write");
    }
    w.finish().expect("zip finish").into_inner()
}

/// Three slides with titles, bullet text and notes on slide 2.
pub fn three_slide_deck() -> Vec<u8> {
    DeckFixture::new(vec![
        SlideFixture::titled("Quarterly Review", &["Where we stand after Q3"]),
        SlideFixture::titled(
            "Budget",
            &["Spend is 8% under plan", "Hiring paused until January"],
        )
        .with_notes("mention the budget"),
        SlideFixture::titled("Next Steps", &["Ship the beta", "Collect feedback"]),
    ])
    .build()
}

/// `n` slides, each with a title and one body line.
pub fn numbered_deck(n: usize) -> Vec<u8> {
    DeckFixture::new(
        (1..=n)
            .map(|i| SlideFixture::titled(&format!("Slide {i}"), &[&format!("Point number {i}")]))
            .collect(),
    )
    .build()
}
