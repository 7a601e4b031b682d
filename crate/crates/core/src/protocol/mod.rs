//! OAI-PMH 2.0: request validation, verb dispatch, pagination, and XML rendering.

mod dispatch;
mod error;
mod render;
mod request;
mod token;

pub use dispatch::{dispatch, dispatch_at, paginate, respond, Page};
pub use error::{ErrorCode, OaiError};
pub use render::{render_response, OAI_NS, OAI_SCHEMA};
pub use request::{parse_request, DateArg, Granularity, OaiRequest, Verb, ARGUMENT_NAMES};
pub use token::{query_digest, resume, ResumptionToken, TokenCodec};

use crate::codecs::MetadataFormat;
use crate::datestamp::Datestamp;

pub const PROTOCOL_VERSION: &str = "2.0";
pub const GRANULARITY: &str = "YYYY-MM-DDThh:mm:ssZ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiResponse {
    pub response_date: Datestamp,
    /// Endpoint URL, the text of the `request` element.
    pub base_url: String,
    /// Echoed request; `None` after badVerb or badArgument, which echo no attributes.
    pub request: Option<OaiRequest>,
    pub body: Result<Payload, OaiError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Identify(IdentifyInfo),
    ListMetadataFormats(Vec<MetadataFormat>),
    ListSets(Vec<SetDescription>),
    ListIdentifiers {
        headers: Vec<RecordHeader>,
        token: Option<TokenElement>,
    },
    ListRecords {
        records: Vec<Record>,
        token: Option<TokenElement>,
    },
    GetRecord(Record),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyInfo {
    pub repository_name: String,
    pub base_url: String,
    pub earliest_datestamp: Datestamp,
    pub admin_email: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetDescription {
    pub spec: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub set_specs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub header: RecordHeader,
    /// Serialized metadata fragment, embedded verbatim.
    pub metadata: String,
}

/// The `resumptionToken` element closing a page of an incomplete list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenElement {
    /// Empty on the last page of a list.
    pub value: String,
    /// Offset of the first record of this page.
    pub cursor: usize,
    pub complete_list_size: usize,
    pub expiration_date: Option<Datestamp>,
}
