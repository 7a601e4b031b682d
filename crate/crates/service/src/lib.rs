//! HTTP front end for a document-root OAI-PMH repository.
//!
//! One listener serves both the OAI-PMH endpoint and the static files it
//! describes, so by-reference records and link-following crawlers resolve
//! against the same server. Requests read the current snapshot through an
//! atomically swapped reference; rescans never block them.

mod access_log;
mod static_files;

use std::future::Future;
use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use chrono::Utc;
use oaifs_core::index::Exclusions;
use oaifs_core::protocol::{render_response, respond};
use oaifs_core::{datestamp, scan, ConfigError, IndexError, RepositorySnapshot, ServiceConfig};
use tokio::sync::oneshot;
use tracing::{info, warn};

pub use access_log::{parse_log, AccessLog, AccessLogEntry, ParseLogError};

const XML_TYPE: &str = "text/xml; charset=utf-8";
const MAX_FORM_BYTES: usize = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial scan failed: {0}")]
    Index(#[from] IndexError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot open access log: {0}")]
    AccessLog(#[source] std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of a rescan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefreshOutcome {
    /// Same snapshot id; the current snapshot (and its tokens) stay in place.
    Unchanged,
    Replaced { old_id: String, new_id: String },
    /// Another rescan was already running.
    Busy,
    /// The scan failed; the current snapshot is still served.
    Failed(String),
}

/// State shared by all request handlers.
#[derive(Debug)]
pub struct AppState {
    cfg: ServiceConfig,
    exclusions: Exclusions,
    snapshot: RwLock<Arc<RepositorySnapshot>>,
    rescan: Mutex<()>,
    in_flight: AtomicUsize,
    log: AccessLog,
}

impl AppState {
    /// Validates `cfg` and runs the initial scan.
    pub fn new(cfg: ServiceConfig, keep_log_in_memory: bool) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let exclusions = Exclusions::new(&cfg.docroot)?;
        let snap = scan(&cfg.docroot)?;
        info!(records = snap.len(), snapshot = snap.snapshot_id(), "initial scan complete");
        let log = AccessLog::new(cfg.access_log.as_deref(), keep_log_in_memory)
            .map_err(ServiceError::AccessLog)?;
        Ok(AppState {
            cfg,
            exclusions,
            snapshot: RwLock::new(Arc::new(snap)),
            rescan: Mutex::new(()),
            in_flight: AtomicUsize::new(0),
            log,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn snapshot(&self) -> Arc<RepositorySnapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.log
    }

    /// Rescans the docroot, installing the result only if it differs.
    pub fn refresh(&self) -> RefreshOutcome {
        let Ok(_guard) = self.rescan.try_lock() else {
            return RefreshOutcome::Busy;
        };
        let next = match scan(&self.cfg.docroot) {
            Ok(s) => s,
            Err(err) => {
                warn!(error = %err, "rescan failed; keeping current snapshot");
                return RefreshOutcome::Failed(err.to_string());
            }
        };
        let mut current = self.snapshot.write().unwrap_or_else(|e| e.into_inner());
        if current.snapshot_id() == next.snapshot_id() {
            return RefreshOutcome::Unchanged;
        }
        let old_id = current.snapshot_id().to_string();
        let new_id = next.snapshot_id().to_string();
        *current = Arc::new(next);
        info!(%old_id, %new_id, "snapshot replaced");
        RefreshOutcome::Replaced { old_id, new_id }
    }
}

/// Status, headers and body of a response, before conversion to axum's type.
#[derive(Debug)]
pub(crate) struct Reply {
    status: StatusCode,
    headers: Vec<(HeaderName, HeaderValue)>,
    body: Vec<u8>,
}

impl Reply {
    fn empty(status: StatusCode) -> Self {
        Reply {
            status,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    fn text(status: StatusCode, body: &str) -> Self {
        let mut r = Reply::empty(status);
        r.set(header::CONTENT_TYPE, "text/plain; charset=utf-8");
        r.body = body.as_bytes().to_vec();
        r
    }

    fn set(&mut self, name: HeaderName, value: &str) {
        match HeaderValue::from_str(value) {
            Ok(v) => self.headers.push((name, v)),
            Err(_) => warn!(%name, "dropping unrepresentable header value"),
        }
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let mut resp = Response::new(Body::from(self.body));
        *resp.status_mut() = self.status;
        for (k, v) in self.headers {
            resp.headers_mut().insert(k, v);
        }
        resp
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().fallback(handle).with_state(state)
}

async fn handle(State(state): State<Arc<AppState>>, req: Request) -> Response {
    let method = req.method().clone();
    let target = req
        .uri()
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| "/".to_string());
    let pending = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    let _guard = InFlight(&state.in_flight);

    let reply = if pending > state.cfg.max_pending_requests {
        let mut r = Reply::text(StatusCode::SERVICE_UNAVAILABLE, "overloaded\n");
        r.set(header::RETRY_AFTER, "1");
        r
    } else {
        route(&state, req).await
    };

    state.log.record(AccessLogEntry {
        timestamp: Utc::now(),
        method: method.to_string(),
        target,
        status: reply.status.as_u16(),
        bytes: reply.body.len() as u64,
    });
    reply.into_response()
}

async fn route(state: &Arc<AppState>, req: Request) -> Reply {
    let path = req.uri().path().to_string();
    if path == state.cfg.endpoint_url_path() {
        return oai(state, req).await;
    }
    let method = req.method().clone();
    if method != Method::GET && method != Method::HEAD {
        let mut r = Reply::text(StatusCode::METHOD_NOT_ALLOWED, "method not allowed\n");
        r.set(header::ALLOW, "GET, HEAD");
        return r;
    }
    let ims = static_files::if_modified_since(req.headers());
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        static_files::serve_static(&state.cfg.docroot, &state.exclusions, &method, &path, ims)
    })
    .await
    .unwrap_or_else(|_| Reply::text(StatusCode::INTERNAL_SERVER_ERROR, "internal error\n"))
}

async fn oai(state: &Arc<AppState>, req: Request) -> Reply {
    let method = req.method().clone();
    let raw: Vec<u8> = match method {
        Method::GET | Method::HEAD => req.uri().query().unwrap_or_default().as_bytes().to_vec(),
        Method::POST => match to_bytes(req.into_body(), MAX_FORM_BYTES).await {
            Ok(b) => b.to_vec(),
            Err(_) => return Reply::text(StatusCode::PAYLOAD_TOO_LARGE, "request body too large\n"),
        },
        _ => {
            let mut r = Reply::text(StatusCode::METHOD_NOT_ALLOWED, "method not allowed\n");
            r.set(header::ALLOW, "GET, HEAD, POST");
            return r;
        }
    };
    let params: Vec<(String, String)> = form_urlencoded::parse(&raw).into_owned().collect();
    let snap = state.snapshot();
    let st = state.clone();
    let xml = tokio::task::spawn_blocking(move || {
        render_response(&respond(params, &snap, &st.cfg, datestamp::now()))
    })
    .await;
    let Ok(xml) = xml else {
        return Reply::text(StatusCode::INTERNAL_SERVER_ERROR, "internal error\n");
    };
    let mut reply = Reply::empty(StatusCode::OK);
    reply.set(header::CONTENT_TYPE, XML_TYPE);
    reply.set(header::CONTENT_LENGTH, &xml.len().to_string());
    if method != Method::HEAD {
        reply.body = xml;
    }
    reply
}

/// Serves `state` on `listener` until `shutdown` resolves, then drains
/// in-flight requests.
pub async fn run(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let rescan = state.cfg.rescan_interval.map(|every| {
        let state = state.clone();
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(every);
            ticker.tick().await;
            loop {
                ticker.tick().await;
                let st = state.clone();
                let _ = tokio::task::spawn_blocking(move || st.refresh()).await;
            }
        })
    });
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    if let Some(task) = rescan {
        task.abort();
    }
    result
}

/// Binds `cfg.listen_address` (port 0 picks a free port) and returns the
/// listener with `cfg` rebased onto the bound address.
pub fn bind(mut cfg: ServiceConfig) -> Result<(StdListener, ServiceConfig), ServiceError> {
    let listener = StdListener::bind(&cfg.listen_address).map_err(|source| ServiceError::Bind {
        addr: cfg.listen_address.clone(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    cfg.bound_to(&addr.to_string());
    Ok((listener, cfg))
}

/// A service running on its own thread and runtime, for tests and the bench
/// harness.
pub struct ServiceHandle {
    state: Arc<AppState>,
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    /// Scans, binds and starts serving; returns once the listener is live.
    pub fn start(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        let (listener, cfg) = bind(cfg)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(AppState::new(cfg, true)?);
        let (stop, stopped) = oneshot::channel::<()>();
        let serve_state = state.clone();
        let thread = std::thread::Builder::new()
            .name(format!("oaifs-{addr}"))
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(4)
                    .enable_all()
                    .build()?;
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    run(listener, serve_state, async {
                        let _ = stopped.await;
                    })
                    .await
                })
            })?;
        Ok(ServiceHandle {
            state,
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.state.cfg
    }

    /// Base URL of the document root.
    pub fn base_url(&self) -> &str {
        self.state.cfg.docroot.base_url()
    }

    pub fn oai_url(&self) -> String {
        self.state.cfg.endpoint_url()
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn snapshot(&self) -> Arc<RepositorySnapshot> {
        self.state.snapshot()
    }

    pub fn refresh(&self) -> RefreshOutcome {
        self.state.refresh()
    }

    pub fn access_log(&self) -> &AccessLog {
        &self.state.log
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
