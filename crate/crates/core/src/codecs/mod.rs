//! Metadata formats a record can be disseminated in.

mod dc;
mod didl;
mod http_header;

use std::io;

use quick_xml::events::BytesText;
use quick_xml::Writer;

pub use dc::{encode_dc, DC_NS, OAI_DC_NS, OAI_DC_SCHEMA};
pub use didl::{
    decode_didl, encode_didl, encode_didl_by_reference, DidlDocument, DIDL_NS, DIDL_SCHEMA,
    DII_NS,
};
pub use http_header::{
    decode_http_header, digest_header_value, encode_http_header, HttpHeaderBlock,
    HTTP_HEADER_NS, HTTP_HEADER_SCHEMA,
};

/// Default upper bound on the size of a datastream carried by value (1 MiB).
pub const DEFAULT_BYVALUE_THRESHOLD: u64 = 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed XML: {0}")]
    Parse(String),
    #[error("structure: {0}")]
    Structure(String),
    #[error("content: {0}")]
    Content(String),
    #[error("integrity: {0}")]
    Integrity(String),
}

impl From<quick_xml::Error> for CodecError {
    fn from(e: quick_xml::Error) -> Self {
        CodecError::Parse(e.to_string())
    }
}

/// A metadata format offered by the repository.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetadataFormat {
    OaiDc,
    HttpHeader,
    OaiDidl,
}

impl MetadataFormat {
    pub const ALL: [MetadataFormat; 3] = [
        MetadataFormat::OaiDc,
        MetadataFormat::HttpHeader,
        MetadataFormat::OaiDidl,
    ];

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.prefix() == prefix)
    }

    pub fn prefix(self) -> &'static str {
        match self {
            MetadataFormat::OaiDc => "oai_dc",
            MetadataFormat::HttpHeader => "http_header",
            MetadataFormat::OaiDidl => "oai_didl",
        }
    }

    pub fn schema(self) -> &'static str {
        match self {
            MetadataFormat::OaiDc => OAI_DC_SCHEMA,
            MetadataFormat::HttpHeader => HTTP_HEADER_SCHEMA,
            MetadataFormat::OaiDidl => DIDL_SCHEMA,
        }
    }

    pub fn namespace(self) -> &'static str {
        match self {
            MetadataFormat::OaiDc => OAI_DC_NS,
            MetadataFormat::HttpHeader => HTTP_HEADER_NS,
            MetadataFormat::OaiDidl => DIDL_NS,
        }
    }
}

pub(crate) const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";

pub(crate) fn text_element(w: &mut Writer<Vec<u8>>, name: &str, text: &str) -> io::Result<()> {
    w.create_element(name)
        .write_text_content(BytesText::new(text))
        .map(|_| ())
}

pub(crate) fn into_string(w: Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner()).expect("writer emits UTF-8")
}
