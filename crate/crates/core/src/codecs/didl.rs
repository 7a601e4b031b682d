//! MPEG-21 DIDL rendering of a web resource.
//!
//! ```text
//! DIDL
//! └── Item
//!     ├── Descriptor/Statement  dii:Identifier = URL
//!     ├── Descriptor/Statement  hh:http_header
//!     └── Component
//!         ├── Resource ref=URL mimeType=…            (always)
//!         └── Resource encoding=base64 mimeType=…    (when size <= threshold)
//! ```
//!
//! The two resources are bit-equivalent alternatives of the same datastream.

use std::collections::HashMap;

use base64::Engine;
use quick_xml::events::{BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};
use sha2::{Digest, Sha256};

use super::{into_string, text_element, CodecError, HttpHeaderBlock, XSI_NS};
use crate::index::ResourceRecord;

pub const DIDL_NS: &str = "urn:mpeg:mpeg21:2002:02-DIDL-NS";
pub const DIDL_SCHEMA: &str = "http://purl.lanl.gov/STB-RL/schemas/2004-11/DIDL.xsd";
pub const DII_NS: &str = "urn:mpeg:mpeg21:2002:01-DII-NS";

const STATEMENT_TYPE: &str = "application/xml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DidlDocument {
    pub identifier: String,
    pub headers: HttpHeaderBlock,
    pub by_ref: String,
    pub by_value: Option<Vec<u8>>,
    pub media_type: String,
}

/// Encodes `rec` with its content. The datastream is carried by value when
/// `rec.size_bytes <= threshold`.
///
/// Fails with [`CodecError::Integrity`] if `content` does not hash to `rec.digest`.
pub fn encode_didl(
    rec: &ResourceRecord,
    content: &[u8],
    threshold: u64,
) -> Result<String, CodecError> {
    if rec.size_bytes > threshold {
        return Ok(encode_didl_by_reference(rec));
    }
    if content.len() as u64 != rec.size_bytes || hex::encode(Sha256::digest(content)) != rec.digest {
        return Err(CodecError::Integrity(format!(
            "content of {} does not match its record",
            rec.url
        )));
    }
    Ok(write_didl(rec, Some(content)))
}

/// Encodes `rec` with a by-reference Resource only.
pub fn encode_didl_by_reference(rec: &ResourceRecord) -> String {
    write_didl(rec, None)
}

fn write_didl(rec: &ResourceRecord, content: Option<&[u8]>) -> String {
    let headers = HttpHeaderBlock::for_record(rec);
    let schema_location = format!("{DIDL_NS} {DIDL_SCHEMA}");
    let mut w = Writer::new(Vec::new());
    w.create_element("didl:DIDL")
        .with_attribute(("xmlns:didl", DIDL_NS))
        .with_attribute(("xmlns:dii", DII_NS))
        .with_attribute(("xmlns:xsi", XSI_NS))
        .with_attribute(("xsi:schemaLocation", schema_location.as_str()))
        .write_inner_content(|w| {
            w.create_element("didl:Item").write_inner_content(|w| {
                w.create_element("didl:Descriptor").write_inner_content(|w| {
                    w.create_element("didl:Statement")
                        .with_attribute(("mimeType", STATEMENT_TYPE))
                        .write_inner_content(|w| text_element(w, "dii:Identifier", &rec.url))?;
                    Ok(())
                })?;
                w.create_element("didl:Descriptor").write_inner_content(|w| {
                    w.create_element("didl:Statement")
                        .with_attribute(("mimeType", STATEMENT_TYPE))
                        .write_inner_content(|w| headers.write(w))?;
                    Ok(())
                })?;
                w.create_element("didl:Component").write_inner_content(|w| {
                    w.create_element("didl:Resource")
                        .with_attribute(("mimeType", rec.media_type.as_str()))
                        .with_attribute(("ref", rec.url.as_str()))
                        .write_empty()?;
                    if let Some(bytes) = content {
                        let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
                        w.create_element("didl:Resource")
                            .with_attribute(("mimeType", rec.media_type.as_str()))
                            .with_attribute(("encoding", "base64"))
                            .write_text_content(BytesText::new(&encoded))?;
                    }
                    Ok(())
                })?;
                Ok(())
            })?;
            Ok(())
        })
        .expect("write to Vec");
    into_string(w)
}

#[derive(Default)]
struct ResourceElement {
    reference: Option<String>,
    mime_type: Option<String>,
    base64: bool,
    text: String,
}

fn attr(e: &BytesStart, name: &[u8]) -> Result<Option<String>, CodecError> {
    for a in e.attributes() {
        let a = a.map_err(|err| CodecError::Parse(err.to_string()))?;
        if a.key.local_name().as_ref() == name {
            return Ok(Some(a.unescape_value()?.into_owned()));
        }
    }
    Ok(None)
}

/// Decodes a DIDL document and checks it against its own header block.
pub fn decode_didl(xml: &[u8]) -> Result<DidlDocument, CodecError> {
    let mut reader = Reader::from_reader(xml);
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut text = String::new();
    let mut items = 0usize;
    let mut components = 0usize;
    let mut identifier: Option<String> = None;
    let mut header_fields: Option<HashMap<String, String>> = None;
    let mut resources: Vec<ResourceElement> = Vec::new();

    loop {
        let event = reader.read_event()?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = e.local_name().as_ref().to_vec();
            let parent = stack.last().map(Vec::as_slice);
            match (parent, name.as_slice()) {
                (None, b"DIDL") => {}
                (None, other) => {
                    return Err(CodecError::Structure(format!(
                        "root element is {}, expected DIDL",
                        String::from_utf8_lossy(other)
                    )))
                }
                (Some(b"DIDL"), b"Item") => items += 1,
                (Some(b"Item"), b"Component") => components += 1,
                (Some(b"Component"), b"Resource") => resources.push(ResourceElement {
                    reference: attr(&e, b"ref")?,
                    mime_type: attr(&e, b"mimeType")?,
                    base64: attr(&e, b"encoding")?.as_deref() == Some("base64"),
                    text: String::new(),
                }),
                (Some(b"Statement"), b"http_header") => {
                    header_fields.get_or_insert_with(HashMap::new);
                }
                _ => {}
            }
            text.clear();
            if empty {
                continue;
            }
            stack.push(name);
            continue;
        }
        match event {
            Event::Text(t) => text.push_str(&t.unescape()?),
            Event::CData(c) => text.push_str(
                std::str::from_utf8(&c).map_err(|e| CodecError::Parse(e.to_string()))?,
            ),
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                let parent = stack.last().map(Vec::as_slice);
                match (parent, name.as_slice()) {
                    (Some(b"Statement"), b"Identifier") => {
                        identifier = Some(std::mem::take(&mut text).trim().to_string());
                    }
                    (Some(b"http_header"), field) => {
                        if let Some(fields) = header_fields.as_mut() {
                            fields.insert(
                                String::from_utf8_lossy(field).into_owned(),
                                std::mem::take(&mut text),
                            );
                        }
                    }
                    (Some(b"Component"), b"Resource") => {
                        if let Some(r) = resources.last_mut() {
                            r.text = std::mem::take(&mut text);
                        }
                    }
                    _ => {}
                }
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if items != 1 {
        return Err(CodecError::Structure(format!(
            "expected exactly one Item under DIDL, found {items}"
        )));
    }
    if components == 0 {
        return Err(CodecError::Structure("Item has no Component".into()));
    }
    let identifier =
        identifier.ok_or_else(|| CodecError::Structure("missing identifier descriptor".into()))?;
    let headers = HttpHeaderBlock::from_fields(
        &header_fields.ok_or_else(|| CodecError::Structure("missing http_header descriptor".into()))?,
    )?;

    let by_ref_el = resources
        .iter()
        .find(|r| r.reference.is_some())
        .ok_or_else(|| CodecError::Structure("no by-reference Resource".into()))?;
    let by_ref = by_ref_el.reference.clone().unwrap_or_default();
    let media_type = by_ref_el
        .mime_type
        .clone()
        .ok_or_else(|| CodecError::Structure("Resource lacks mimeType".into()))?;
    if by_ref != identifier {
        return Err(CodecError::Integrity(format!(
            "by-reference URL {by_ref} differs from identifier {identifier}"
        )));
    }

    let by_value = match resources.iter().find(|r| r.base64) {
        None => None,
        Some(r) => {
            if r.mime_type.as_deref() != Some(media_type.as_str()) {
                return Err(CodecError::Structure(
                    "sibling Resources disagree on mimeType".into(),
                ));
            }
            let compact: String = r.text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(compact.as_bytes())
                .map_err(|e| CodecError::Content(format!("base64: {e}")))?;
            if bytes.len() as u64 != headers.content_length {
                return Err(CodecError::Integrity(format!(
                    "by-value length {} differs from Content-Length {}",
                    bytes.len(),
                    headers.content_length
                )));
            }
            if let Some(declared) = &headers.digest_header {
                let actual = format!(
                    "SHA-256={}",
                    base64::engine::general_purpose::STANDARD.encode(Sha256::digest(&bytes))
                );
                if &actual != declared {
                    return Err(CodecError::Integrity(
                        "by-value content does not match declared digest".into(),
                    ));
                }
            }
            Some(bytes)
        }
    };

    Ok(DidlDocument {
        identifier,
        headers,
        by_ref,
        by_value,
        media_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datestamp;

    fn record_for(content: &[u8]) -> ResourceRecord {
        ResourceRecord {
            url: "http://h/dir/f.txt".into(),
            rel_path: "dir/f.txt".into(),
            datestamp: datestamp::parse_seconds("2000-01-01T00:00:00Z").unwrap(),
            media_type: "text/plain".into(),
            size_bytes: content.len() as u64,
            digest: hex::encode(Sha256::digest(content)),
            shadowed: false,
        }
    }

    #[test]
    fn small_file_both_resources() {
        let content = b"0123456789";
        let rec = record_for(content);
        let xml = encode_didl(&rec, content, 100).unwrap();
        assert_eq!(xml.matches("<didl:Resource").count(), 2);
        assert!(xml.contains(r#"ref="http://h/dir/f.txt""#));
        let doc = decode_didl(xml.as_bytes()).unwrap();
        assert_eq!(doc.by_value.as_deref(), Some(&content[..]));
        assert_eq!(doc.by_ref, rec.url);
        assert_eq!(doc.identifier, rec.url);
        assert_eq!(doc.media_type, "text/plain");
        assert_eq!(doc.headers, HttpHeaderBlock::for_record(&rec));
    }

    #[test]
    fn large_file_reference_only() {
        let content = vec![7u8; 200];
        let rec = record_for(&content);
        let xml = encode_didl(&rec, &content, 100).unwrap();
        assert_eq!(xml.matches("<didl:Resource").count(), 1);
        let doc = decode_didl(xml.as_bytes()).unwrap();
        assert!(doc.by_value.is_none());
        assert_eq!(doc.by_ref, rec.url);
    }

    #[test]
    fn empty_file_keeps_value_resource() {
        let rec = record_for(b"");
        let xml = encode_didl(&rec, b"", 0).unwrap();
        let doc = decode_didl(xml.as_bytes()).unwrap();
        assert_eq!(doc.by_value, Some(Vec::new()));
    }

    #[test]
    fn refuses_mismatched_content() {
        let rec = record_for(b"abc");
        assert!(matches!(
            encode_didl(&rec, b"abd", 100),
            Err(CodecError::Integrity(_))
        ));
    }

    #[test]
    fn threshold_is_inclusive() {
        let content = b"12345";
        let rec = record_for(content);
        let doc = decode_didl(encode_didl(&rec, content, 5).unwrap().as_bytes()).unwrap();
        assert!(doc.by_value.is_some());
        let doc = decode_didl(encode_didl(&rec, content, 4).unwrap().as_bytes()).unwrap();
        assert!(doc.by_value.is_none());
    }

    #[test]
    fn missing_component_is_structure_error() {
        let rec = record_for(b"abc");
        let xml = encode_didl(&rec, b"abc", 100).unwrap();
        let start = xml.find("<didl:Component>").unwrap();
        let end = xml.find("</didl:Component>").unwrap() + "</didl:Component>".len();
        let broken = format!("{}{}", &xml[..start], &xml[end..]);
        assert!(matches!(
            decode_didl(broken.as_bytes()),
            Err(CodecError::Structure(_))
        ));
    }

    #[test]
    fn length_mismatch_is_integrity_error() {
        let rec = record_for(b"abcdef");
        let xml = encode_didl(&rec, b"abcdef", 100).unwrap();
        let tampered = xml.replace(
            "<hh:Content-Length>6</hh:Content-Length>",
            "<hh:Content-Length>7</hh:Content-Length>",
        );
        assert!(matches!(
            decode_didl(tampered.as_bytes()),
            Err(CodecError::Integrity(_))
        ));
    }

    #[test]
    fn wrapped_base64_accepted() {
        let content: Vec<u8> = (0..=255).collect();
        let rec = record_for(&content);
        let xml = encode_didl(&rec, &content, 1000).unwrap();
        let b64 = base64::engine::general_purpose::STANDARD.encode(&content);
        let wrapped: String = b64
            .as_bytes()
            .chunks(76)
            .map(|c| std::str::from_utf8(c).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        let xml = xml.replace(&b64, &wrapped);
        assert_eq!(decode_didl(xml.as_bytes()).unwrap().by_value, Some(content));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(
            decode_didl(b"<didl:DIDL><didl:Item></didl:DIDL>"),
            Err(CodecError::Parse(_))
        ));
        assert!(matches!(
            decode_didl(b"<foo/>"),
            Err(CodecError::Structure(_))
        ));
    }
}
