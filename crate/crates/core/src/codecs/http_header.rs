use std::collections::HashMap;

use base64::Engine;
use quick_xml::events::Event;
use quick_xml::{Reader, Writer};

use super::{into_string, text_element, CodecError};
use crate::datestamp::{self, Datestamp};
use crate::index::ResourceRecord;
use crate::SERVER_TOKEN;

pub const HTTP_HEADER_NS: &str = "http://purl.lanl.gov/STB-RL/schemas/2004-08/HTTP-HEADER";
pub const HTTP_HEADER_SCHEMA: &str = "http://purl.lanl.gov/STB-RL/schemas/2004-08/HTTP-HEADER.xsd";

/// The response headers an unconditional GET of the resource returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpHeaderBlock {
    pub content_type: String,
    pub content_length: u64,
    pub last_modified: Datestamp,
    pub server: String,
    /// `Digest` header value, `SHA-256=<base64>`.
    pub digest_header: Option<String>,
}

/// `SHA-256=<base64>` for a hex-encoded SHA-256 digest.
pub fn digest_header_value(hex_digest: &str) -> Option<String> {
    let raw = hex::decode(hex_digest).ok().filter(|b| b.len() == 32)?;
    Some(format!(
        "SHA-256={}",
        base64::engine::general_purpose::STANDARD.encode(raw)
    ))
}

impl HttpHeaderBlock {
    pub fn for_record(rec: &ResourceRecord) -> Self {
        HttpHeaderBlock {
            content_type: rec.media_type.clone(),
            content_length: rec.size_bytes,
            last_modified: rec.datestamp,
            server: SERVER_TOKEN.to_string(),
            digest_header: digest_header_value(&rec.digest),
        }
    }

    pub(crate) fn write(&self, w: &mut Writer<Vec<u8>>) -> std::io::Result<()> {
        let last_modified = httpdate::fmt_http_date(self.last_modified.into());
        w.create_element("hh:http_header")
            .with_attribute(("xmlns:hh", HTTP_HEADER_NS))
            .write_inner_content(|w| {
                text_element(w, "hh:Content-Type", &self.content_type)?;
                text_element(w, "hh:Content-Length", &self.content_length.to_string())?;
                text_element(w, "hh:Last-Modified", &last_modified)?;
                text_element(w, "hh:Server", &self.server)?;
                if let Some(d) = &self.digest_header {
                    text_element(w, "hh:Digest", d)?;
                }
                Ok(())
            })?;
        Ok(())
    }

    /// Builds the block from the `http_header` child elements, keyed by local name.
    pub(crate) fn from_fields(fields: &HashMap<String, String>) -> Result<Self, CodecError> {
        let get = |name: &str| {
            fields
                .get(name)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| CodecError::Structure(format!("http_header lacks {name}")))
        };
        let content_length = get("Content-Length")?
            .parse::<u64>()
            .map_err(|e| CodecError::Content(format!("Content-Length: {e}")))?;
        let last_modified = httpdate::parse_http_date(&get("Last-Modified")?)
            .map(datestamp::from_system_time)
            .map_err(|e| CodecError::Content(format!("Last-Modified: {e}")))?;
        Ok(HttpHeaderBlock {
            content_type: get("Content-Type")?,
            content_length,
            last_modified,
            server: get("Server")?,
            digest_header: fields.get("Digest").map(|s| s.trim().to_string()),
        })
    }
}

/// The `http_header` metadata format for a record.
pub fn encode_http_header(rec: &ResourceRecord) -> String {
    let mut w = Writer::new(Vec::new());
    HttpHeaderBlock::for_record(rec)
        .write(&mut w)
        .expect("write to Vec");
    into_string(w)
}

/// Parses a standalone `http_header` fragment.
pub fn decode_http_header(xml: &[u8]) -> Result<HttpHeaderBlock, CodecError> {
    let mut reader = Reader::from_reader(xml);
    let mut fields = HashMap::new();
    let mut depth = 0usize;
    let mut text = String::new();
    let mut saw_root = false;
    loop {
        match reader.read_event()? {
            Event::Start(e) => {
                if depth == 0 {
                    if e.local_name().as_ref() != b"http_header" {
                        return Err(CodecError::Structure("root is not http_header".into()));
                    }
                    saw_root = true;
                }
                depth += 1;
                text.clear();
            }
            Event::End(e) => {
                depth = depth.saturating_sub(1);
                if depth == 1 {
                    let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                    fields.insert(name, std::mem::take(&mut text));
                }
            }
            Event::Text(t) => text.push_str(&t.unescape()?),
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err(CodecError::Structure("no http_header element".into()));
    }
    HttpHeaderBlock::from_fields(&fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(size: u64, media: &str) -> ResourceRecord {
        ResourceRecord {
            url: "http://h/f".into(),
            rel_path: "f".into(),
            datestamp: datestamp::parse_seconds("2000-01-01T00:00:00Z").unwrap(),
            media_type: media.into(),
            size_bytes: size,
            digest: "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855".into(),
            shadowed: false,
        }
    }

    #[test]
    fn field_projection() {
        let xml = encode_http_header(&record(1024, "text/plain"));
        assert!(xml.contains("<hh:Content-Length>1024</hh:Content-Length>"));
        assert!(xml.contains("<hh:Content-Type>text/plain</hh:Content-Type>"));
        assert!(xml.contains("<hh:Last-Modified>Sat, 01 Jan 2000 00:00:00 GMT</hh:Last-Modified>"));
        let back = decode_http_header(xml.as_bytes()).unwrap();
        assert_eq!(back, HttpHeaderBlock::for_record(&record(1024, "text/plain")));
    }

    #[test]
    fn zero_length() {
        let xml = encode_http_header(&record(0, "text/plain"));
        let back = decode_http_header(xml.as_bytes()).unwrap();
        assert_eq!(back.content_length, 0);
        assert_eq!(
            back.digest_header.as_deref(),
            Some("SHA-256=47DEQpj8HBSa+/TImW+5JCeuQeRkm5NMpJWZG3hSuFU=")
        );
    }

    #[test]
    fn deterministic() {
        let r = record(5, "text/html");
        assert_eq!(encode_http_header(&r), encode_http_header(&r));
    }
}
