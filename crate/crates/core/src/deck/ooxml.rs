//! Text extraction from the PresentationML package.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use std::collections::HashMap;
use std::io::{Cursor, Read};
use zip::ZipArchive;

use super::DeckError;

pub(crate) type Package = ZipArchive<Cursor<Vec<u8>>>;

const PRESENTATION: &str = "ppt/presentation.xml";
const PRESENTATION_RELS: &str = "ppt/_rels/presentation.xml.rels";

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Relationship {
    pub rel_type: String,
    pub target: String,
}

/// Text content of one slide before rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct SlideText {
    pub title: Option<String>,
    pub body_texts: Vec<String>,
}

pub(crate) fn open_package(bytes: &[u8]) -> Result<Package, DeckError> {
    ZipArchive::new(Cursor::new(bytes.to_vec())).map_err(|_| DeckError::NotZip)
}

pub(crate) fn read_part(pkg: &mut Package, name: &str) -> Result<Vec<u8>, DeckError> {
    let mut file = pkg
        .by_name(name)
        .map_err(|_| DeckError::MissingPart(name.to_string()))?;
    let mut out = Vec::new();
    file.read_to_end(&mut out)
        .map_err(|e| DeckError::Malformed(format!("{name}: {e}")))?;
    Ok(out)
}

fn local(name: &[u8]) -> &[u8] {
    match name.iter().rposition(|&b| b == b':') {
        Some(i) => &name[i + 1..],
        None => name,
    }
}

fn attr(e: &BytesStart<'_>, key: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == key)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

/// `r:id` needs the namespace prefix to tell it apart from a plain `id`.
fn rel_id_attr(e: &BytesStart<'_>) -> Option<String> {
    e.attributes().flatten().find_map(|a| {
        let key = a.key.as_ref();
        (key != b"id" && local(key) == b"id")
            .then(|| a.unescape_value().ok().map(|v| v.into_owned()))
            .flatten()
    })
}

fn xml_error(part: &str, e: impl std::fmt::Display) -> DeckError {
    DeckError::Malformed(format!("{part}: {e}"))
}

/// Relationship ids of `<p:sldId>` entries in presentation order.
pub(crate) fn slide_id_list(xml: &[u8]) -> Result<Vec<String>, DeckError> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut ids = Vec::new();
    let mut in_list = false;
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) if local(e.name().as_ref()) == b"sldIdLst" => in_list = true,
            Ok(Event::End(e)) if local(e.name().as_ref()) == b"sldIdLst" => in_list = false,
            Ok(Event::Start(e)) | Ok(Event::Empty(e))
                if in_list && local(e.name().as_ref()) == b"sldId" =>
            {
                let rid = rel_id_attr(&e)
                    .ok_or_else(|| DeckError::Malformed("sldId without relationship id".into()))?;
                ids.push(rid);
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_error(PRESENTATION, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(ids)
}

pub(crate) fn parse_rels(
    xml: &[u8],
    part: &str,
) -> Result<HashMap<String, Relationship>, DeckError> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut rels = HashMap::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) | Ok(Event::Empty(e))
                if local(e.name().as_ref()) == b"Relationship" =>
            {
                if let (Some(id), Some(target)) = (attr(&e, b"Id"), attr(&e, b"Target")) {
                    let rel_type = attr(&e, b"Type").unwrap_or_default();
                    rels.insert(id, Relationship { rel_type, target });
                }
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_error(part, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(rels)
}

/// Resolves a relationship target against the directory of its source part.
pub(crate) fn resolve_target(source_dir: &str, target: &str) -> String {
    if let Some(abs) = target.strip_prefix('/') {
        return abs.to_string();
    }
    let mut parts: Vec<&str> = source_dir.split('/').filter(|p| !p.is_empty()).collect();
    for seg in target.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    parts.join("/")
}

pub(crate) fn rels_path_for(part: &str) -> String {
    match part.rsplit_once('/') {
        Some((dir, file)) => format!("{dir}/_rels/{file}.rels"),
        None => format!("_rels/{part}.rels"),
    }
}

pub(crate) fn dir_of(part: &str) -> &str {
    part.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

/// Slide part names in presentation order.
pub(crate) fn ordered_slide_parts(pkg: &mut Package) -> Result<Vec<String>, DeckError> {
    let pres = read_part(pkg, PRESENTATION)?;
    let ids = slide_id_list(&pres)?;
    let rels_xml = read_part(pkg, PRESENTATION_RELS)?;
    let rels = parse_rels(&rels_xml, PRESENTATION_RELS)?;
    ids.iter()
        .map(|rid| {
            rels.get(rid)
                .map(|r| resolve_target("ppt", &r.target))
                .ok_or_else(|| DeckError::Malformed(format!("slide relationship {rid} not found")))
        })
        .collect()
}

#[derive(Default)]
struct ShapeState {
    placeholder: Option<String>,
    paragraphs: Vec<String>,
    current: Option<String>,
}

impl ShapeState {
    fn text(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One entry per text-bearing `<p:sp>` in document (reading) order:
/// placeholder type and concatenated text.
fn shape_texts(xml: &[u8], part: &str) -> Result<Vec<(Option<String>, String)>, DeckError> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut out = Vec::new();
    let mut shape: Option<ShapeState> = None;
    let mut in_text = false;
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) => match local(e.name().as_ref()) {
                b"sp" => shape = Some(ShapeState::default()),
                b"p" => {
                    if let Some(s) = shape.as_mut() {
                        s.current = Some(String::new());
                    }
                }
                b"t" => in_text = shape.is_some(),
                b"ph" => {
                    if let Some(s) = shape.as_mut() {
                        s.placeholder = Some(attr(&e, b"type").unwrap_or_else(|| "body".into()));
                    }
                }
                _ => {}
            },
            Ok(Event::Empty(e)) => match local(e.name().as_ref()) {
                b"ph" => {
                    if let Some(s) = shape.as_mut() {
                        s.placeholder = Some(attr(&e, b"type").unwrap_or_else(|| "body".into()));
                    }
                }
                b"br" => {
                    if let Some(cur) = shape.as_mut().and_then(|s| s.current.as_mut()) {
                        cur.push('\n');
                    }
                }
                _ => {}
            },
            Ok(Event::Text(t)) if in_text => {
                let text = t.unescape().map_err(|e| xml_error(part, e))?;
                if let Some(cur) = shape.as_mut().and_then(|s| s.current.as_mut()) {
                    cur.push_str(&text);
                }
            }
            Ok(Event::End(e)) => match local(e.name().as_ref()) {
                b"t" => in_text = false,
                b"p" => {
                    if let Some(s) = shape.as_mut() {
                        if let Some(p) = s.current.take() {
                            s.paragraphs.push(p);
                        }
                    }
                }
                b"sp" => {
                    if let Some(s) = shape.take() {
                        let text = s.text();
                        if !text.is_empty() {
                            out.push((s.placeholder, text));
                        }
                    }
                }
                _ => {}
            },
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_error(part, e)),
            _ => {}
        }
        buf.clear();
    }
    if shape.is_some() {
        return Err(xml_error(part, "unterminated shape"));
    }
    Ok(out)
}

pub(crate) fn slide_text(xml: &[u8], part: &str) -> Result<SlideText, DeckError> {
    let mut st = SlideText::default();
    for (ph, text) in shape_texts(xml, part)? {
        match ph.as_deref() {
            Some("title") | Some("ctrTitle") if st.title.is_none() => st.title = Some(text),
            Some("sldNum") | Some("dt") | Some("ftr") | Some("hdr") => {}
            _ => st.body_texts.push(text),
        }
    }
    Ok(st)
}

/// Speaker notes: text of body placeholders on the notes slide.
pub(crate) fn notes_text(xml: &[u8], part: &str) -> Result<Option<String>, DeckError> {
    let texts: Vec<String> = shape_texts(xml, part)?
        .into_iter()
        .filter(|(ph, _)| matches!(ph.as_deref(), Some("body")))
        .map(|(_, t)| t)
        .collect();
    Ok((!texts.is_empty()).then(|| texts.join("\n")))
}
