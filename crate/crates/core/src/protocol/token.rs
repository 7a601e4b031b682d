//! Stateless resumptionTokens.
//!
//! A token carries the original list query, the identity of the snapshot it
//! was cut from, the next offset, and the complete list size. The payload is
//! checksummed with a repository key, so any edit a client makes to the
//! opaque string is detected. A token is refused once the snapshot changes or
//! its time-to-live elapses.

use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::error::OaiError;
use super::request::{parse_request, OaiRequest, Verb};
use crate::datestamp::Datestamp;
use crate::index::RepositorySnapshot;

const TOKEN_VERSION: u8 = 1;
const MAC_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResumptionToken {
    /// The list request the token continues (without the token itself).
    pub query: OaiRequest,
    pub query_digest: String,
    pub snapshot_id: String,
    /// Offset of the first record of the next page.
    pub cursor: usize,
    pub complete_list_size: usize,
    pub issued_at: Datestamp,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    v: u8,
    q: Vec<(String, String)>,
    d: String,
    s: String,
    c: usize,
    n: usize,
    t: i64,
}

/// Digest over the parts of a list request that select records.
pub fn query_digest(req: &OaiRequest) -> String {
    let mut h = Sha256::new();
    for part in [
        Some(req.verb.as_str().to_string()),
        req.metadata_prefix.clone(),
        req.from.map(|d| d.to_wire()),
        req.until.map(|d| d.to_wire()),
        req.set.clone(),
    ] {
        h.update(part.unwrap_or_default().as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..16])
}

/// Issues and checks tokens under one key and lifetime.
#[derive(Debug, Clone)]
pub struct TokenCodec {
    key: Vec<u8>,
    ttl: Duration,
}

impl TokenCodec {
    pub fn new(key: impl AsRef<[u8]>, ttl: Duration) -> Self {
        TokenCodec {
            key: key.as_ref().to_vec(),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn mac(&self, payload: &[u8]) -> [u8; MAC_LEN] {
        let mut h = Sha256::new();
        h.update((self.key.len() as u64).to_be_bytes());
        h.update(&self.key);
        h.update(payload);
        let full = h.finalize();
        let mut out = [0u8; MAC_LEN];
        out.copy_from_slice(&full[..MAC_LEN]);
        out
    }

    pub fn encode(&self, token: &ResumptionToken) -> String {
        let mut query = token.query.clone();
        query.resumption_token = None;
        let payload = Payload {
            v: TOKEN_VERSION,
            q: query.to_params(),
            d: token.query_digest.clone(),
            s: token.snapshot_id.clone(),
            c: token.cursor,
            n: token.complete_list_size,
            t: token.issued_at.timestamp(),
        };
        let bytes = serde_json::to_vec(&payload).expect("payload serializes");
        format!(
            "{}.{}",
            URL_SAFE_NO_PAD.encode(&bytes),
            URL_SAFE_NO_PAD.encode(self.mac(&bytes))
        )
    }

    /// Decodes and authenticates a token string; expiry is checked against `now`.
    pub fn decode(&self, token: &str, now: Datestamp) -> Result<ResumptionToken, OaiError> {
        let garbled = || OaiError::bad_token("resumptionToken is not valid");
        let (body, mac) = token.split_once('.').ok_or_else(garbled)?;
        let bytes = URL_SAFE_NO_PAD.decode(body).map_err(|_| garbled())?;
        let mac = URL_SAFE_NO_PAD.decode(mac).map_err(|_| garbled())?;
        if mac.as_slice() != self.mac(&bytes) {
            return Err(garbled());
        }
        let payload: Payload = serde_json::from_slice(&bytes).map_err(|_| garbled())?;
        if payload.v != TOKEN_VERSION {
            return Err(garbled());
        }
        let query = parse_request(payload.q.iter().map(|(k, v)| (k, v))).map_err(|_| garbled())?;
        if !matches!(query.verb, Verb::ListIdentifiers | Verb::ListRecords)
            || query_digest(&query) != payload.d
            || payload.c >= payload.n
        {
            return Err(garbled());
        }
        let issued_at = chrono::DateTime::from_timestamp(payload.t, 0).ok_or_else(garbled)?;
        let age = now.signed_duration_since(issued_at);
        if age.num_seconds() > self.ttl.as_secs() as i64 {
            return Err(OaiError::bad_token("resumptionToken has expired"));
        }
        Ok(ResumptionToken {
            query,
            query_digest: payload.d,
            snapshot_id: payload.s,
            cursor: payload.c,
            complete_list_size: payload.n,
            issued_at,
        })
    }
}

/// Recovers the original query and the next offset from a token issued
/// against `snap`.
pub fn resume(
    token: &str,
    snap: &RepositorySnapshot,
    codec: &TokenCodec,
    now: Datestamp,
) -> Result<(OaiRequest, usize), OaiError> {
    let decoded = codec.decode(token, now)?;
    if decoded.snapshot_id != snap.snapshot_id() {
        return Err(OaiError::bad_token(
            "the repository changed since this resumptionToken was issued",
        ));
    }
    Ok((decoded.query, decoded.cursor))
}
