//! Document-root index: the file set of a web server mapped onto the URLs it
//! would be published under.
//!
//! A web server resolves URLs to files; this module runs the other direction.
//! Each regular file below the root becomes a [`ResourceRecord`] identified by
//! its URL. Dynamic sources (PHP, CGI, SSI, JSP) are never exported, since the
//! server would normally execute rather than return them. Files whose natural
//! URL is claimed by an alias are kept but flagged as shadowed.

mod media;
mod scan;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datestamp::{self, Datestamp};

pub use media::{
    is_valid_set_spec, media_type_of, set_ancestry, set_spec_of, OCTET_STREAM, SET_ROOT,
};
pub use scan::{scan, Exclusions};

pub const DEFAULT_EXCLUDED_EXTENSIONS: [&str; 4] = [".php", ".cgi", ".shtml", ".jsp"];

/// Characters escaped inside a single URL path segment.
const SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'`')
    .add(b'{')
    .add(b'}')
    .add(b'/')
    .add(b'\\')
    .add(b'^')
    .add(b'|')
    .add(b'[')
    .add(b']')
    .add(b';')
    .add(b'&')
    .add(b'+')
    .add(b'=');

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("document root {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("invalid exclusion pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: globset::Error,
    },
}

/// A URL prefix served from somewhere other than its natural place in the
/// document root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    /// Absolute URL path, e.g. `/A`. Stored without a trailing slash.
    pub url_prefix: String,
    /// File or directory the prefix resolves to. Relative paths are taken
    /// against the document root.
    pub target: PathBuf,
}

impl Alias {
    pub fn new(url_prefix: &str, target: impl Into<PathBuf>) -> Self {
        let trimmed = url_prefix.trim().trim_end_matches('/');
        let url_prefix = if trimmed.starts_with('/') {
            trimmed.to_string()
        } else {
            format!("/{trimmed}")
        };
        Alias {
            url_prefix,
            target: target.into(),
        }
    }

    /// Whether `url_path` (absolute, beginning with `/`) falls under this alias.
    /// Matching is segment-wise: `/A` claims `/A` and `/A/x` but not `/AB`.
    pub fn claims(&self, url_path: &str) -> bool {
        match url_path.strip_prefix(&self.url_prefix) {
            Some(rest) => rest.is_empty() || rest.starts_with('/'),
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocRootConfig {
    pub root_path: PathBuf,
    base_url: String,
    excluded_extensions: Vec<String>,
    pub excluded_path_patterns: Vec<String>,
    pub alias_table: Vec<Alias>,
}

impl DocRootConfig {
    /// Default exclusions: dynamic-content extensions and the `oai` endpoint path.
    pub fn new(root_path: impl Into<PathBuf>, base_url: &str) -> Self {
        DocRootConfig {
            root_path: root_path.into(),
            base_url: normalize_base_url(base_url),
            excluded_extensions: DEFAULT_EXCLUDED_EXTENSIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            excluded_path_patterns: endpoint_patterns("/oai"),
            alias_table: Vec::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn set_base_url(&mut self, base_url: &str) {
        self.base_url = normalize_base_url(base_url);
    }

    pub fn excluded_extensions(&self) -> &[String] {
        &self.excluded_extensions
    }

    pub fn set_excluded_extensions<I, S>(&mut self, exts: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.excluded_extensions = exts
            .into_iter()
            .map(|e| normalize_extension(e.as_ref()))
            .filter(|e| e.len() > 1)
            .collect();
    }

    pub fn with_excluded_extensions<I, S>(mut self, exts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.set_excluded_extensions(exts);
        self
    }

    pub fn with_excluded_path_patterns<I, S>(mut self, patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.excluded_path_patterns = patterns.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_alias(mut self, alias: Alias) -> Self {
        self.alias_table.push(alias);
        self
    }

    /// Path component of the base URL, without trailing slash (`""` for a host root).
    pub fn base_path(&self) -> &str {
        let after_scheme = self
            .base_url
            .split_once("://")
            .map(|(_, rest)| rest)
            .unwrap_or(&self.base_url);
        match after_scheme.find('/') {
            Some(i) => &after_scheme[i..],
            None => "",
        }
    }

    /// Absolute URL of a root-relative path (segments separated by `/`).
    pub fn url_for(&self, rel_path: &str) -> String {
        format!("{}{}", self.base_url, url_path_for(rel_path))
    }

    /// Alias targets given as relative paths are taken against the root.
    pub fn resolve_alias_target(&self, alias: &Alias) -> PathBuf {
        if alias.target.is_absolute() {
            alias.target.clone()
        } else {
            self.root_path.join(&alias.target)
        }
    }

    pub fn is_excluded_extension(&self, rel_path: &str) -> bool {
        let lower = rel_path.to_ascii_lowercase();
        self.excluded_extensions.iter().any(|ext| lower.ends_with(ext))
    }
}

/// Exclusion globs covering an endpoint mounted at `endpoint_path`.
pub fn endpoint_patterns(endpoint_path: &str) -> Vec<String> {
    let rel = endpoint_path.trim_matches('/');
    if rel.is_empty() {
        return Vec::new();
    }
    vec![rel.to_string(), format!("{rel}/**")]
}

fn normalize_base_url(url: &str) -> String {
    url.trim().trim_end_matches('/').to_string()
}

fn normalize_extension(ext: &str) -> String {
    let ext = ext.trim().to_ascii_lowercase();
    if ext.starts_with('.') {
        ext
    } else {
        format!(".{ext}")
    }
}

/// `/`-prefixed, percent-encoded URL path for a root-relative file path.
pub fn url_path_for(rel_path: &str) -> String {
    let mut out = String::with_capacity(rel_path.len() + 1);
    for seg in rel_path.split('/') {
        out.push('/');
        out.extend(utf8_percent_encode(seg, SEGMENT));
    }
    out
}

/// One harvestable file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRecord {
    /// Absolute URL; doubles as the OAI identifier.
    pub url: String,
    /// Root-relative path with `/` separators.
    pub rel_path: String,
    pub datestamp: Datestamp,
    pub media_type: String,
    pub size_bytes: u64,
    /// Lowercase hex SHA-256 of the content.
    pub digest: String,
    pub shadowed: bool,
}

impl ResourceRecord {
    pub fn set_spec(&self) -> String {
        set_spec_of(&self.media_type)
    }
}

/// Immutable, ordered result of one scan.
#[derive(Debug, Clone)]
pub struct RepositorySnapshot {
    snapshot_id: String,
    created_at: Datestamp,
    records: Vec<ResourceRecord>,
    earliest_datestamp: Datestamp,
    set_index: BTreeMap<String, Vec<usize>>,
    by_url: HashMap<String, usize>,
}

impl RepositorySnapshot {
    /// Sorts records by `(datestamp, url)` and derives the identity and indexes.
    pub fn from_records(mut records: Vec<ResourceRecord>, created_at: Datestamp) -> Self {
        records.sort_by(|a, b| (a.datestamp, &a.url).cmp(&(b.datestamp, &b.url)));

        let mut hasher = Sha256::new();
        for rec in &records {
            hasher.update(rec.url.as_bytes());
            hasher.update(b"\t");
            hasher.update(datestamp::format(&rec.datestamp).as_bytes());
            hasher.update(b"\t");
            hasher.update(rec.size_bytes.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let snapshot_id = hex::encode(&hasher.finalize()[..16]);

        let mut set_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_url = HashMap::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            let spec = rec.set_spec();
            for ancestor in set_ancestry(&spec) {
                set_index.entry(ancestor.to_string()).or_default().push(pos);
            }
            by_url.entry(rec.url.clone()).or_insert(pos);
        }

        let earliest_datestamp = records
            .first()
            .map(|r| r.datestamp)
            .unwrap_or_else(datestamp::epoch);

        RepositorySnapshot {
            snapshot_id,
            created_at,
            records,
            earliest_datestamp,
            set_index,
            by_url,
        }
    }

    pub fn empty() -> Self {
        Self::from_records(Vec::new(), datestamp::now())
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn created_at(&self) -> Datestamp {
        self.created_at
    }

    pub fn records(&self) -> &[ResourceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn earliest_datestamp(&self) -> Datestamp {
        self.earliest_datestamp
    }

    /// Every setSpec in the hierarchy, in lexical order (parents precede children).
    pub fn set_specs(&self) -> impl Iterator<Item = &str> {
        self.set_index.keys().map(String::as_str)
    }

    /// Positions of the records belonging to `set_spec` or any of its descendants.
    pub fn set_members(&self, set_spec: &str) -> &[usize] {
        self.set_index
            .get(set_spec)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn get(&self, url: &str) -> Option<&ResourceRecord> {
        self.by_url.get(url).map(|&pos| &self.records[pos])
    }
}

/// Records with `from <= datestamp <= until` that belong to `set`, in snapshot order.
pub fn filter_records<'a>(
    snap: &'a RepositorySnapshot,
    from: Option<Datestamp>,
    until: Option<Datestamp>,
    set: Option<&str>,
) -> Vec<&'a ResourceRecord> {
    let in_range = |rec: &ResourceRecord| {
        from.is_none_or(|f| rec.datestamp >= f) && until.is_none_or(|u| rec.datestamp <= u)
    };
    match set {
        Some(spec) => snap
            .set_members(spec)
            .iter()
            .map(|&pos| &snap.records[pos])
            .filter(|r| in_range(r))
            .collect(),
        None => {
            // Records are sorted by datestamp, so the range is a contiguous slice.
            let records = &snap.records;
            let lo = from.map_or(0, |f| records.partition_point(|r| r.datestamp < f));
            let hi = until.map_or(records.len(), |u| records.partition_point(|r| r.datestamp <= u));
            records[lo..hi.max(lo)].iter().collect()
        }
    }
}
