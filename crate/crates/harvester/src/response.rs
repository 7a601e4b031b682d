use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use oaifs_core::datestamp::{self, Datestamp};

#[derive(Debug, thiserror::Error)]
pub enum ResponseError {
    #[error("malformed OAI-PMH response: {0}")]
    Xml(String),
    #[error("OAI-PMH response lacks {0}")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestedHeader {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub set_specs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestedRecord {
    pub header: HarvestedHeader,
    /// The metadata element's content, verbatim.
    pub metadata: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInfo {
    /// Empty on the last page of a list.
    pub value: String,
    pub cursor: Option<usize>,
    pub complete_list_size: Option<usize>,
}

/// One parsed OAI-PMH response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OaiPage {
    pub response_date: Option<Datestamp>,
    pub error: Option<(String, String)>,
    pub headers: Vec<HarvestedHeader>,
    pub records: Vec<HarvestedRecord>,
    pub token: Option<TokenInfo>,
}

impl OaiPage {
    /// Token value to continue with, if the list is incomplete.
    pub fn next_token(&self) -> Option<&str> {
        self.token.as_ref().map(|t| t.value.as_str()).filter(|v| !v.is_empty())
    }

    pub fn error_code(&self) -> Option<&str> {
        self.error.as_ref().map(|(c, _)| c.as_str())
    }
}

fn xml_err(e: impl std::fmt::Display) -> ResponseError {
    ResponseError::Xml(e.to_string())
}

fn attr(e: &BytesStart, name: &[u8]) -> Result<Option<String>, ResponseError> {
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        if a.key.local_name().as_ref() == name {
            return Ok(Some(a.unescape_value().map_err(xml_err)?.into_owned()));
        }
    }
    Ok(None)
}

#[derive(Default)]
struct PartialHeader {
    identifier: Option<String>,
    datestamp: Option<String>,
    set_specs: Vec<String>,
}

impl PartialHeader {
    fn finish(self) -> Result<HarvestedHeader, ResponseError> {
        let stamp = self.datestamp.ok_or(ResponseError::Missing("header datestamp"))?;
        Ok(HarvestedHeader {
            identifier: self.identifier.ok_or(ResponseError::Missing("header identifier"))?,
            datestamp: datestamp::parse_any(stamp.trim())
                .ok_or_else(|| ResponseError::Xml(format!("bad datestamp {stamp:?}")))?,
            set_specs: self.set_specs,
        })
    }
}

/// Parses a response document. Metadata fragments are sliced out of the
/// input untouched, so they can be handed to a format decoder as-is.
pub fn parse_response(xml: &[u8]) -> Result<OaiPage, ResponseError> {
    let mut reader = Reader::from_reader(xml);
    let mut page = OaiPage::default();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut text = String::new();
    let mut header: Option<PartialHeader> = None;
    let mut record_header: Option<HarvestedHeader> = None;
    let mut metadata_start: Option<usize> = None;
    let mut metadata: Option<String> = None;
    let mut saw_root = false;

    loop {
        let before = reader.buffer_position() as usize;
        let event = reader.read_event().map_err(xml_err)?;
        if metadata_start.is_some() {
            // Inside <metadata>: skip until its own end tag.
            match &event {
                Event::Start(e) => stack.push(e.local_name().as_ref().to_vec()),
                Event::End(_) => {
                    let name = stack.pop().unwrap_or_default();
                    if name == b"metadata" && stack.last().map(Vec::as_slice) == Some(b"record") {
                        let start = metadata_start.take().unwrap_or(before);
                        metadata = Some(
                            String::from_utf8(xml[start..before].to_vec()).map_err(xml_err)?,
                        );
                    }
                }
                Event::Eof => return Err(ResponseError::Xml("unterminated metadata".into())),
                _ => {}
            }
            continue;
        }
        match event {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_vec();
                match name.as_slice() {
                    b"OAI-PMH" => saw_root = true,
                    b"header" => header = Some(PartialHeader::default()),
                    b"metadata" if stack.last().map(Vec::as_slice) == Some(b"record") => {
                        metadata_start = Some(reader.buffer_position() as usize);
                    }
                    b"error" => {
                        page.error = Some((attr(&e, b"code")?.unwrap_or_default(), String::new()))
                    }
                    b"resumptionToken" => page.token = Some(token_attrs(&e)?),
                    _ => {}
                }
                stack.push(name);
                text.clear();
            }
            Event::Empty(e) => match e.local_name().as_ref() {
                b"resumptionToken" => page.token = Some(token_attrs(&e)?),
                b"error" => page.error = Some((attr(&e, b"code")?.unwrap_or_default(), String::new())),
                _ => {}
            },
            Event::Text(t) => text.push_str(&t.unescape().map_err(xml_err)?),
            Event::CData(t) => text.push_str(&String::from_utf8_lossy(&t)),
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                let parent = stack.last().map(Vec::as_slice);
                let value = std::mem::take(&mut text);
                match (name.as_slice(), parent) {
                    (b"responseDate", _) => {
                        page.response_date = datestamp::parse_any(value.trim());
                    }
                    (b"error", _) => {
                        if let Some(err) = page.error.as_mut() {
                            err.1 = value;
                        }
                    }
                    (b"resumptionToken", _) => {
                        if let Some(t) = page.token.as_mut() {
                            t.value = value.trim().to_string();
                        }
                    }
                    (b"identifier", Some(b"header")) => {
                        if let Some(h) = header.as_mut() {
                            h.identifier = Some(value.trim().to_string());
                        }
                    }
                    (b"datestamp", Some(b"header")) => {
                        if let Some(h) = header.as_mut() {
                            h.datestamp = Some(value);
                        }
                    }
                    (b"setSpec", Some(b"header")) => {
                        if let Some(h) = header.as_mut() {
                            h.set_specs.push(value.trim().to_string());
                        }
                    }
                    (b"header", parent) => {
                        let h = header.take().unwrap_or_default().finish()?;
                        if parent == Some(b"record") {
                            record_header = Some(h);
                        } else {
                            page.headers.push(h);
                        }
                    }
                    (b"record", _) => {
                        let header = record_header
                            .take()
                            .ok_or(ResponseError::Missing("record header"))?;
                        page.records.push(HarvestedRecord {
                            header,
                            metadata: metadata.take().unwrap_or_default(),
                        });
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(ResponseError::Xml("truncated document".into()));
    }
    if !saw_root {
        return Err(ResponseError::Missing("OAI-PMH root element"));
    }
    Ok(page)
}

fn token_attrs(e: &BytesStart) -> Result<TokenInfo, ResponseError> {
    let num = |name: &[u8]| -> Result<Option<usize>, ResponseError> {
        Ok(attr(e, name)?.and_then(|v| v.parse().ok()))
    };
    Ok(TokenInfo {
        value: String::new(),
        cursor: num(b"cursor")?,
        complete_list_size: num(b"completeListSize")?,
    })
}
