//! Core of a filesystem-backed OAI-PMH repository.
//!
//! A document root is scanned into an immutable [`RepositorySnapshot`] whose
//! records map each file to the URL a web server would publish it under. The
//! [`protocol`] module answers the six OAI-PMH verbs against a snapshot and
//! renders the XML wire format, while [`codecs`] turns individual records into
//! Dublin Core, HTTP header, and MPEG-21 DIDL metadata.

pub mod codecs;
pub mod config;
pub mod datestamp;
pub mod index;
pub mod protocol;

pub use config::{ConfigError, ServiceConfig};
pub use index::{
    filter_records, media_type_of, scan, set_spec_of, Alias, DocRootConfig, IndexError,
    RepositorySnapshot, ResourceRecord,
};

/// Product token sent in the `Server` header and recorded in header blocks.
pub const SERVER_TOKEN: &str = concat!("oaifs/", env!("CARGO_PKG_VERSION"));
