use tracing::warn;

use super::token::{query_digest, ResumptionToken, TokenCodec};
use super::{
    ErrorCode, IdentifyInfo, OaiError, OaiRequest, OaiResponse, Payload, Record, RecordHeader,
    SetDescription, TokenElement, Verb,
};
use crate::codecs::{encode_dc, encode_didl, encode_didl_by_reference, encode_http_header, MetadataFormat};
use crate::config::ServiceConfig;
use crate::datestamp::{self, Datestamp};
use crate::index::{filter_records, RepositorySnapshot, ResourceRecord, SET_ROOT};

/// One page of a list and where the next one starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page<'a, T> {
    pub items: &'a [T],
    pub cursor: usize,
    pub next_cursor: Option<usize>,
    pub complete_list_size: usize,
}

/// `matching[cursor .. cursor + page_size]`, with a follow-up offset while
/// records remain.
pub fn paginate<T>(matching: &[T], cursor: usize, page_size: usize) -> Page<'_, T> {
    let page_size = page_size.max(1);
    let start = cursor.min(matching.len());
    let end = start.saturating_add(page_size).min(matching.len());
    Page {
        items: &matching[start..end],
        cursor: start,
        next_cursor: (end < matching.len()).then_some(end),
        complete_list_size: matching.len(),
    }
}

/// Parses raw arguments and dispatches them; the full request cycle.
pub fn respond<I, K, V>(
    params: I,
    snap: &RepositorySnapshot,
    cfg: &ServiceConfig,
    now: Datestamp,
) -> OaiResponse
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    match super::parse_request(params) {
        Ok(req) => dispatch_at(&req, snap, cfg, now),
        Err(err) => OaiResponse {
            response_date: now,
            base_url: cfg.endpoint_url(),
            request: None,
            body: Err(err),
        },
    }
}

pub fn dispatch(req: &OaiRequest, snap: &RepositorySnapshot, cfg: &ServiceConfig) -> OaiResponse {
    dispatch_at(req, snap, cfg, datestamp::now())
}

/// Answers a validated request against `snap` as of `now`.
pub fn dispatch_at(
    req: &OaiRequest,
    snap: &RepositorySnapshot,
    cfg: &ServiceConfig,
    now: Datestamp,
) -> OaiResponse {
    let body = match req.verb {
        Verb::Identify => Ok(Payload::Identify(IdentifyInfo {
            repository_name: cfg.repository_name.clone(),
            base_url: cfg.endpoint_url(),
            earliest_datestamp: snap.earliest_datestamp(),
            admin_email: cfg.admin_email.clone(),
        })),
        Verb::ListMetadataFormats => list_metadata_formats(req, snap),
        Verb::ListSets => list_sets(req, snap),
        Verb::ListIdentifiers | Verb::ListRecords => list(req, snap, cfg, now),
        Verb::GetRecord => get_record(req, snap, cfg),
    };
    OaiResponse {
        response_date: now,
        base_url: cfg.endpoint_url(),
        request: Some(req.clone()),
        body,
    }
}

fn format_of(req: &OaiRequest) -> Result<MetadataFormat, OaiError> {
    let prefix = req.metadata_prefix.as_deref().unwrap_or_default();
    MetadataFormat::from_prefix(prefix).ok_or_else(|| {
        OaiError::new(
            ErrorCode::CannotDisseminateFormat,
            format!("metadata format {prefix:?} is not supported"),
        )
    })
}

fn lookup<'a>(snap: &'a RepositorySnapshot, id: &str) -> Result<&'a ResourceRecord, OaiError> {
    snap.get(id).ok_or_else(|| {
        OaiError::new(ErrorCode::IdDoesNotExist, format!("no item with identifier {id}"))
    })
}

fn list_metadata_formats(req: &OaiRequest, snap: &RepositorySnapshot) -> Result<Payload, OaiError> {
    if let Some(id) = &req.identifier {
        lookup(snap, id)?;
    }
    Ok(Payload::ListMetadataFormats(MetadataFormat::ALL.to_vec()))
}

fn list_sets(req: &OaiRequest, snap: &RepositorySnapshot) -> Result<Payload, OaiError> {
    if req.resumption_token.is_some() {
        return Err(OaiError::bad_token("ListSets responses are never split"));
    }
    let sets = snap
        .set_specs()
        .map(|spec| SetDescription {
            spec: spec.to_string(),
            name: set_name(spec),
        })
        .collect();
    Ok(Payload::ListSets(sets))
}

fn set_name(spec: &str) -> String {
    let mut parts = spec.split(':').skip(1);
    match (parts.next(), parts.next()) {
        (None, _) if spec == SET_ROOT => "Media types".to_string(),
        (Some(ty), None) => format!("{ty}/*"),
        (Some(ty), Some(sub)) => format!("{ty}/{sub}"),
        _ => spec.to_string(),
    }
}

fn header_of(rec: &ResourceRecord) -> RecordHeader {
    RecordHeader {
        identifier: rec.url.clone(),
        datestamp: rec.datestamp,
        set_specs: vec![rec.set_spec()],
    }
}

fn metadata_of(rec: &ResourceRecord, format: MetadataFormat, cfg: &ServiceConfig) -> String {
    match format {
        MetadataFormat::OaiDc => encode_dc(rec),
        MetadataFormat::HttpHeader => encode_http_header(rec),
        MetadataFormat::OaiDidl => {
            if rec.size_bytes > cfg.byvalue_threshold {
                return encode_didl_by_reference(rec);
            }
            let path = cfg.docroot.root_path.join(&rec.rel_path);
            let encoded = std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|content| {
                    encode_didl(rec, &content, cfg.byvalue_threshold).map_err(|e| e.to_string())
                });
            match encoded {
                Ok(xml) => xml,
                Err(reason) => {
                    // The file changed or vanished after the scan; fall back to the reference.
                    warn!(url = %rec.url, %reason, "serving DIDL by reference only");
                    encode_didl_by_reference(rec)
                }
            }
        }
    }
}

fn record_of(rec: &ResourceRecord, format: MetadataFormat, cfg: &ServiceConfig) -> Record {
    Record {
        header: header_of(rec),
        metadata: metadata_of(rec, format, cfg),
    }
}

fn get_record(
    req: &OaiRequest,
    snap: &RepositorySnapshot,
    cfg: &ServiceConfig,
) -> Result<Payload, OaiError> {
    let format = format_of(req)?;
    let rec = lookup(snap, req.identifier.as_deref().unwrap_or_default())?;
    Ok(Payload::GetRecord(record_of(rec, format, cfg)))
}

fn list(
    req: &OaiRequest,
    snap: &RepositorySnapshot,
    cfg: &ServiceConfig,
    now: Datestamp,
) -> Result<Payload, OaiError> {
    let codec = TokenCodec::new(&cfg.token_key, cfg.token_ttl);
    let (query, cursor, expected_size) = match &req.resumption_token {
        Some(token) => {
            let decoded = codec.decode(token, now)?;
            if decoded.snapshot_id != snap.snapshot_id() {
                return Err(OaiError::bad_token(
                    "the repository changed since this resumptionToken was issued",
                ));
            }
            if decoded.query.verb != req.verb {
                return Err(OaiError::bad_token(format!(
                    "resumptionToken belongs to {}",
                    decoded.query.verb
                )));
            }
            (decoded.query, decoded.cursor, Some(decoded.complete_list_size))
        }
        None => (req.clone(), 0, None),
    };

    let format = format_of(&query)?;
    let matching = filter_records(
        snap,
        query.from.map(|d| d.instant),
        query.until.map(|d| d.instant),
        query.set.as_deref(),
    );
    if matching.is_empty() {
        return Err(OaiError::new(
            ErrorCode::NoRecordsMatch,
            "no records match the request",
        ));
    }
    if expected_size.is_some_and(|n| n != matching.len()) {
        return Err(OaiError::bad_token("list size changed"));
    }

    let page_size = match req.verb {
        Verb::ListRecords => cfg.page_size_records,
        _ => cfg.page_size_identifiers,
    };
    let page = paginate(&matching, cursor, page_size);
    let token = match page.next_cursor {
        Some(next) => Some(TokenElement {
            value: codec.encode(&ResumptionToken {
                query_digest: query_digest(&query),
                query: query.clone(),
                snapshot_id: snap.snapshot_id().to_string(),
                cursor: next,
                complete_list_size: page.complete_list_size,
                issued_at: now,
            }),
            cursor: page.cursor,
            complete_list_size: page.complete_list_size,
            expiration_date: chrono::Duration::from_std(codec.ttl())
                .ok()
                .map(|ttl| now + ttl),
        }),
        None if page.cursor > 0 => Some(TokenElement {
            value: String::new(),
            cursor: page.cursor,
            complete_list_size: page.complete_list_size,
            expiration_date: None,
        }),
        None => None,
    };

    Ok(match req.verb {
        Verb::ListRecords => Payload::ListRecords {
            records: page.items.iter().map(|r| record_of(r, format, cfg)).collect(),
            token,
        },
        _ => Payload::ListIdentifiers {
            headers: page.items.iter().map(|r| header_of(r)).collect(),
            token,
        },
    })
}
