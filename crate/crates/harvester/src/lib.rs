//! OAI-PMH harvesting client for document-root repositories.
//!
//! Follows resumptionToken chains, restarts once when the repository changes
//! underneath a chain, and rebuilds files from DIDL records into a local
//! mirror laid out like a web crawl of the same site.

mod mirror;
mod response;
mod state;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use oaifs_core::codecs::decode_didl;
use oaifs_core::datestamp::Datestamp;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use sha2::{Digest, Sha256};
use tracing::{debug, warn};
use url::Url;

pub use mirror::{Mirror, MirrorError, WriteOutcome};
pub use response::{
    parse_response, HarvestedHeader, HarvestedRecord, OaiPage, ResponseError, TokenInfo,
};
pub use state::{load_state, save_state, HarvestMetrics, HarvestState, StateError};

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error("invalid URL {0:?}")]
    Url(String),
    #[error("request to {url} failed: {message}")]
    Http { url: String, message: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error("repository error {code}: {message}")]
    Oai { code: String, message: String },
    #[error("the repository kept changing during the harvest (resumptionToken rejected after a restart)")]
    StaleRepository,
}

/// Bounded exponential backoff for transport failures and 5xx answers.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(2),
        }
    }
}

/// Selection arguments of a list request.
#[derive(Debug, Clone, Default)]
pub struct HarvestOptions {
    /// OAI-PMH endpoint URL.
    pub base_url: String,
    /// Wire form, `YYYY-MM-DD` or `YYYY-MM-DDThh:mm:ssZ`.
    pub from: Option<String>,
    pub until: Option<String>,
    pub set: Option<String>,
    pub metadata_prefix: Option<String>,
    /// Expected page size. The repository decides; a mismatch is only logged.
    pub page_hint: Option<usize>,
}

impl HarvestOptions {
    pub fn new(base_url: impl Into<String>) -> Self {
        HarvestOptions {
            base_url: base_url.into(),
            ..Default::default()
        }
    }

    fn initial_params(&self, verb: &str, default_prefix: &str) -> Vec<(String, String)> {
        let mut p = vec![
            ("verb".to_string(), verb.to_string()),
            (
                "metadataPrefix".to_string(),
                self.metadata_prefix.clone().unwrap_or_else(|| default_prefix.to_string()),
            ),
        ];
        for (k, v) in [("from", &self.from), ("until", &self.until), ("set", &self.set)] {
            if let Some(v) = v {
                p.push((k.to_string(), v.clone()));
            }
        }
        p
    }
}

/// Passed to the page observer after each page has been processed.
#[derive(Debug)]
pub struct PageEvent<'a> {
    pub verb: &'a str,
    /// Zero-based position in the current chain.
    pub index: usize,
    pub items: usize,
    pub next_token: Option<&'a str>,
}

#[derive(Debug, Clone, Default)]
pub struct IdentifierHarvest {
    /// Identifiers in server order.
    pub identifiers: Vec<String>,
    pub headers: Vec<HarvestedHeader>,
    pub metrics: HarvestMetrics,
    /// responseDate of the first response of the completed chain.
    pub response_date: Option<Datestamp>,
    pub restarts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFailure {
    pub identifier: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct RecordHarvest {
    /// Identifiers of the records received, in server order.
    pub identifiers: Vec<String>,
    /// Mirror files written or restamped, each once, in processing order.
    pub updated: Vec<PathBuf>,
    pub failures: Vec<RecordFailure>,
    pub by_ref_fetches: u64,
    pub metrics: HarvestMetrics,
    pub response_date: Option<Datestamp>,
    pub restarts: u32,
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    bytes: AtomicU64,
    records: AtomicU64,
    pages: AtomicU64,
}

impl Counters {
    fn snapshot(&self, wall_time: Duration) -> HarvestMetrics {
        HarvestMetrics {
            http_requests: self.requests.load(Ordering::SeqCst),
            bytes_received: self.bytes.load(Ordering::SeqCst),
            records_received: self.records.load(Ordering::SeqCst),
            wall_time,
            pages: self.pages.load(Ordering::SeqCst),
        }
    }
}

/// HTTP with retries and request accounting; shareable across fetch threads.
struct Fetcher {
    client: Client,
    retry: RetryPolicy,
    counters: Counters,
}

impl Fetcher {
    fn get(&self, url: &Url) -> Result<Vec<u8>, HarvestError> {
        let mut backoff = self.retry.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            self.counters.requests.fetch_add(1, Ordering::SeqCst);
            let mut wait = backoff;
            match self.client.get(url.clone()).send() {
                Ok(resp) if resp.status().is_success() => match resp.bytes() {
                    Ok(body) => {
                        self.counters.bytes.fetch_add(body.len() as u64, Ordering::SeqCst);
                        return Ok(body.to_vec());
                    }
                    Err(e) => last_error = e.to_string(),
                },
                Ok(resp)
                    if resp.status().is_server_error()
                        || resp.status() == StatusCode::TOO_MANY_REQUESTS =>
                {
                    if let Some(secs) = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                    {
                        wait = Duration::from_secs(secs);
                    }
                    last_error = format!("HTTP {}", resp.status().as_u16());
                }
                Ok(resp) => {
                    return Err(HarvestError::Status {
                        url: url.to_string(),
                        status: resp.status().as_u16(),
                    })
                }
                Err(e) => last_error = e.to_string(),
            }
            if attempt < self.retry.max_attempts {
                debug!(%url, attempt, error = %last_error, "retrying");
                std::thread::sleep(wait.min(self.retry.max_backoff));
                backoff = (backoff * 2).min(self.retry.max_backoff);
            }
        }
        Err(HarvestError::Http {
            url: url.to_string(),
            message: last_error,
        })
    }

    fn oai(&self, endpoint: &str, params: &[(String, String)]) -> Result<OaiPage, HarvestError> {
        let url = Url::parse_with_params(endpoint, params)
            .map_err(|_| HarvestError::Url(endpoint.to_string()))?;
        let body = self.get(&url)?;
        let page = parse_response(&body)?;
        self.counters.pages.fetch_add(1, Ordering::SeqCst);
        Ok(page)
    }
}

type PageObserver = Box<dyn FnMut(&PageEvent) + Send>;

pub struct Harvester {
    fetcher: Fetcher,
    concurrency: usize,
    observer: Option<PageObserver>,
}

impl Default for Harvester {
    fn default() -> Self {
        Harvester::new()
    }
}

impl Harvester {
    pub fn new() -> Self {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .user_agent(concat!("oaifs-harvester/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("HTTP client");
        Harvester {
            fetcher: Fetcher {
                client,
                retry: RetryPolicy::default(),
                counters: Counters::default(),
            },
            concurrency: DEFAULT_CONCURRENCY,
            observer: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.fetcher.retry = retry;
        self
    }

    /// Upper bound on by-reference fetches in flight within one page.
    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    /// Called after each page, before the next request is issued.
    pub fn on_page(mut self, f: impl FnMut(&PageEvent) + Send + 'static) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    fn reset_counters(&mut self) {
        self.fetcher.counters = Counters::default();
    }

    /// Walks a token chain, restarting once on badResumptionToken.
    /// `handle` sees every page; `reset` runs before a restart.
    fn chain(
        &mut self,
        verb: &str,
        initial: Vec<(String, String)>,
        endpoint: &str,
        page_hint: Option<usize>,
        mut handle: impl FnMut(&Fetcher, &OaiPage) -> usize,
        mut reset: impl FnMut(),
    ) -> Result<(Option<Datestamp>, u32), HarvestError> {
        let mut restarts = 0;
        'restart: loop {
            let mut params = initial.clone();
            let mut first_date = None;
            let mut index = 0;
            loop {
                let page = self.fetcher.oai(endpoint, &params)?;
                if let Some((code, message)) = &page.error {
                    match code.as_str() {
                        "noRecordsMatch" if index == 0 => return Ok((page.response_date, restarts)),
                        "badResumptionToken" if index > 0 && restarts == 0 => {
                            warn!(%message, "resumptionToken rejected; restarting the harvest");
                            restarts += 1;
                            reset();
                            continue 'restart;
                        }
                        "badResumptionToken" if index > 0 => return Err(HarvestError::StaleRepository),
                        _ => {
                            return Err(HarvestError::Oai {
                                code: code.clone(),
                                message: message.clone(),
                            })
                        }
                    }
                }
                if index == 0 {
                    first_date = page.response_date;
                }
                let items = handle(&self.fetcher, &page);
                self.fetcher.counters.records.fetch_add(items as u64, Ordering::SeqCst);
                let next = page.next_token();
                if let (Some(hint), Some(_)) = (page_hint, next) {
                    if hint != items {
                        warn!(hint, items, "repository page size differs from the hint");
                    }
                }
                if let Some(observer) = self.observer.as_mut() {
                    observer(&PageEvent {
                        verb,
                        index,
                        items,
                        next_token: next,
                    });
                }
                match next {
                    Some(token) => {
                        params = vec![
                            ("verb".to_string(), verb.to_string()),
                            ("resumptionToken".to_string(), token.to_string()),
                        ];
                        index += 1;
                    }
                    None => return Ok((first_date, restarts)),
                }
            }
        }
    }

    /// Lists identifiers (ListIdentifiers), following the chain to its end.
    pub fn harvest_identifiers(
        &mut self,
        opts: &HarvestOptions,
    ) -> Result<IdentifierHarvest, HarvestError> {
        self.reset_counters();
        let started = Instant::now();
        let mut headers: Vec<HarvestedHeader> = Vec::new();
        let headers_ref = Mutex::new(&mut headers);
        let (response_date, restarts) = self.chain(
            "ListIdentifiers",
            opts.initial_params("ListIdentifiers", "oai_dc"),
            &opts.base_url,
            opts.page_hint,
            |_, page| {
                headers_ref.lock().unwrap().extend(page.headers.iter().cloned());
                page.headers.len()
            },
            || headers_ref.lock().unwrap().clear(),
        )?;
        let metrics = self.fetcher.counters.snapshot(started.elapsed());
        Ok(IdentifierHarvest {
            identifiers: headers.iter().map(|h| h.identifier.clone()).collect(),
            headers,
            metrics,
            response_date,
            restarts,
        })
    }

    /// Harvests DIDL records (ListRecords) into `mirror`.
    pub fn harvest_records(
        &mut self,
        opts: &HarvestOptions,
        mirror: &Mirror,
    ) -> Result<RecordHarvest, HarvestError> {
        self.reset_counters();
        let started = Instant::now();
        let concurrency = self.concurrency;
        let by_ref = AtomicU64::new(0);
        let mut out = RecordHarvest::default();
        let mut seen_paths = HashSet::new();
        let out_ref = Mutex::new((&mut out, &mut seen_paths));

        let (response_date, restarts) = self.chain(
            "ListRecords",
            opts.initial_params("ListRecords", "oai_didl"),
            &opts.base_url,
            opts.page_hint,
            |fetcher, page| {
                let results = store_page(fetcher, mirror, &page.records, concurrency, &by_ref);
                let mut guard = out_ref.lock().unwrap();
                let (out, seen) = &mut *guard;
                for (rec, result) in page.records.iter().zip(results) {
                    out.identifiers.push(rec.header.identifier.clone());
                    match result {
                        Ok((path, WriteOutcome::Unchanged)) => debug!(path = %path.display(), "unchanged"),
                        Ok((path, _)) => {
                            if seen.insert(path.clone()) {
                                out.updated.push(path);
                            }
                        }
                        Err(reason) => {
                            warn!(identifier = %rec.header.identifier, %reason, "record skipped");
                            out.failures.push(RecordFailure {
                                identifier: rec.header.identifier.clone(),
                                reason,
                            });
                        }
                    }
                }
                page.records.len()
            },
            || {
                let mut guard = out_ref.lock().unwrap();
                guard.0.identifiers.clear();
                guard.0.failures.clear();
            },
        )?;
        out.by_ref_fetches = by_ref.load(Ordering::SeqCst);
        out.metrics = self.fetcher.counters.snapshot(started.elapsed());
        out.response_date = response_date;
        out.restarts = restarts;
        Ok(out)
    }
}

/// The docroot base URL implied by an endpoint URL: its parent directory.
pub fn default_mirror_base(endpoint: &str) -> Result<Url, HarvestError> {
    let url = Url::parse(endpoint).map_err(|_| HarvestError::Url(endpoint.to_string()))?;
    url.join("./").map_err(|_| HarvestError::Url(endpoint.to_string()))
}

fn store_page(
    fetcher: &Fetcher,
    mirror: &Mirror,
    records: &[HarvestedRecord],
    concurrency: usize,
    by_ref: &AtomicU64,
) -> Vec<Result<(PathBuf, WriteOutcome), String>> {
    let slots: Vec<Mutex<Option<Result<(PathBuf, WriteOutcome), String>>>> =
        records.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = concurrency.min(records.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(rec) = records.get(i) else { break };
                let result = store_record(fetcher, mirror, rec, by_ref);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().unwrap_or_else(|| Err("not processed".into())))
        .collect()
}

fn store_record(
    fetcher: &Fetcher,
    mirror: &Mirror,
    rec: &HarvestedRecord,
    by_ref: &AtomicU64,
) -> Result<(PathBuf, WriteOutcome), String> {
    let doc = decode_didl(rec.metadata.as_bytes()).map_err(|e| e.to_string())?;
    let content = match doc.by_value {
        Some(bytes) => bytes,
        None => {
            by_ref.fetch_add(1, Ordering::SeqCst);
            let url = Url::parse(&doc.by_ref).map_err(|e| format!("by-reference URL: {e}"))?;
            fetcher.get(&url).map_err(|e| e.to_string())?
        }
    };
    if content.len() as u64 != doc.headers.content_length {
        return Err(format!(
            "{} bytes received, {} declared",
            content.len(),
            doc.headers.content_length
        ));
    }
    if let Some(declared) = &doc.headers.digest_header {
        let actual = format!(
            "SHA-256={}",
            base64::engine::general_purpose::STANDARD.encode(Sha256::digest(&content))
        );
        if *declared != actual {
            return Err("content digest mismatch".into());
        }
    }
    mirror
        .store(&doc.identifier, &content, rec.header.datestamp)
        .map_err(|e| e.to_string())
}
