//! Static serving of the document root, the U→F direction of the mapping the
//! index computes in reverse.

use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use oaifs_core::index::{url_path_for, Exclusions};
use oaifs_core::{media_type_of, DocRootConfig, SERVER_TOKEN};
use percent_encoding::percent_decode_str;
use sha2::{Digest, Sha256};

use crate::Reply;

const LISTING_TYPE: &str = "text/html; charset=utf-8";

/// Where a request path lands on disk, and the directory it must stay under.
#[derive(Debug, PartialEq, Eq)]
struct Target {
    path: PathBuf,
    confine: PathBuf,
}

/// Maps a raw URL path to a file below the root or an alias target.
/// `None` for anything that must answer 404.
fn resolve(docroot: &DocRootConfig, exclusions: &Exclusions, raw_path: &str) -> Option<Target> {
    let base = docroot.base_path();
    let within = raw_path.strip_prefix(base)?;
    if !(within.is_empty() || within.starts_with('/')) {
        return None;
    }
    let decoded = percent_decode_str(within).decode_utf8().ok()?;
    let segments: Vec<&str> = decoded.split('/').filter(|s| !s.is_empty()).collect();
    for seg in &segments {
        if seg.starts_with('.') || seg.contains('\\') || seg.contains('\0') {
            return None;
        }
    }

    let server_path = format!("{base}/{}", segments.join("/"));
    if let Some(alias) = docroot.alias_table.iter().find(|a| a.claims(&server_path)) {
        let claimed = alias.url_prefix.trim_start_matches(base).split('/').filter(|s| !s.is_empty()).count();
        let target = docroot.resolve_alias_target(alias);
        let confine = if target.is_dir() {
            target.clone()
        } else {
            target.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        let mut path = target;
        for seg in segments.iter().skip(claimed) {
            path.push(seg);
        }
        return Some(Target { path, confine });
    }

    let rel = segments.join("/");
    if !rel.is_empty() && exclusions.is_excluded(&rel) {
        return None;
    }
    let mut path = docroot.root_path.clone();
    for seg in &segments {
        path.push(seg);
    }
    Some(Target {
        path,
        confine: docroot.root_path.clone(),
    })
}

fn mtime_seconds(meta: &fs::Metadata) -> SystemTime {
    let t = meta.modified().unwrap_or(UNIX_EPOCH);
    let secs = t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    UNIX_EPOCH + Duration::from_secs(secs)
}

fn not_found() -> Reply {
    Reply::text(StatusCode::NOT_FOUND, "not found\n")
}

fn forbidden() -> Reply {
    Reply::text(StatusCode::FORBIDDEN, "forbidden\n")
}

fn io_reply(err: &io::Error) -> Reply {
    match err.kind() {
        ErrorKind::PermissionDenied => forbidden(),
        _ => not_found(),
    }
}

/// Answers GET or HEAD for a non-endpoint path.
pub(crate) fn serve_static(
    docroot: &DocRootConfig,
    exclusions: &Exclusions,
    method: &Method,
    raw_path: &str,
    if_modified_since: Option<SystemTime>,
) -> Reply {
    let Some(target) = resolve(docroot, exclusions, raw_path) else {
        return not_found();
    };
    let meta = match fs::metadata(&target.path) {
        Ok(m) => m,
        Err(e) => return io_reply(&e),
    };
    let confined = match (target.path.canonicalize(), target.confine.canonicalize()) {
        (Ok(p), Ok(root)) => p.starts_with(root),
        _ => false,
    };
    if !confined {
        return not_found();
    }

    if meta.is_dir() {
        if !raw_path.ends_with('/') {
            let mut reply = Reply::text(StatusCode::MOVED_PERMANENTLY, "");
            reply.body.clear();
            reply.set(header::LOCATION, &format!("{raw_path}/"));
            return reply;
        }
        let index = target.path.join("index.html");
        return match fs::metadata(&index) {
            Ok(m) if m.is_file() => file_reply(&index, &m, method, if_modified_since),
            _ => listing(&target.path, raw_path, exclusions, docroot, method),
        };
    }
    if !meta.is_file() {
        return not_found();
    }
    file_reply(&target.path, &meta, method, if_modified_since)
}

fn file_reply(
    path: &Path,
    meta: &fs::Metadata,
    method: &Method,
    if_modified_since: Option<SystemTime>,
) -> Reply {
    let mtime = mtime_seconds(meta);
    let media_type = media_type_of(path);
    if if_modified_since.is_some_and(|ims| ims >= mtime) {
        let mut reply = Reply::empty(StatusCode::NOT_MODIFIED);
        reply.set(header::LAST_MODIFIED, &httpdate::fmt_http_date(mtime));
        reply.set(header::SERVER, SERVER_TOKEN);
        return reply;
    }
    let body = match fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "unreadable file");
            return forbidden();
        }
    };
    let mut reply = Reply::empty(StatusCode::OK);
    reply.set(header::CONTENT_TYPE, &media_type);
    reply.set(header::CONTENT_LENGTH, &body.len().to_string());
    reply.set(header::LAST_MODIFIED, &httpdate::fmt_http_date(mtime));
    reply.set(header::SERVER, SERVER_TOKEN);
    reply.set(
        header::HeaderName::from_static("digest"),
        &format!("SHA-256={}", STANDARD.encode(Sha256::digest(&body))),
    );
    if method != Method::HEAD {
        reply.body = body;
    }
    reply
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A generated index so link-following crawlers can discover the tree.
fn listing(
    dir: &Path,
    raw_path: &str,
    exclusions: &Exclusions,
    docroot: &DocRootConfig,
    method: &Method,
) -> Reply {
    let entries = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) => return io_reply(&e),
    };
    let dir_rel = raw_path
        .strip_prefix(docroot.base_path())
        .map(|p| percent_decode_str(p).decode_utf8_lossy().trim_matches('/').to_string())
        .unwrap_or_default();
    let mut names: Vec<(String, bool)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let is_dir = e.path().is_dir();
            (!name.starts_with('.')).then_some((name, is_dir))
        })
        .filter(|(name, is_dir)| {
            let rel = if dir_rel.is_empty() { name.clone() } else { format!("{dir_rel}/{name}") };
            *is_dir || !exclusions.is_excluded(&rel)
        })
        .collect();
    names.sort();

    let title = escape(&percent_decode_str(raw_path).decode_utf8_lossy());
    let mut html = format!("<!DOCTYPE html>\n<html><head><title>Index of {title}</title></head><body>\n<h1>Index of {title}</h1>\n<ul>\n");
    for (name, is_dir) in names {
        let rel = if dir_rel.is_empty() { name.clone() } else { format!("{dir_rel}/{name}") };
        let mut href = format!("{}{}", docroot.base_path(), url_path_for(&rel));
        let mut label = escape(&name);
        if is_dir {
            href.push('/');
            label.push('/');
        }
        html.push_str(&format!("<li><a href=\"{}\">{label}</a></li>\n", escape(&href)));
    }
    html.push_str("</ul>\n</body></html>\n");

    let mut reply = Reply::empty(StatusCode::OK);
    reply.set(header::CONTENT_TYPE, LISTING_TYPE);
    reply.set(header::CONTENT_LENGTH, &html.len().to_string());
    reply.set(header::SERVER, SERVER_TOKEN);
    if method != Method::HEAD {
        reply.body = html.into_bytes();
    }
    reply
}

/// `If-Modified-Since`, when present and parseable.
pub(crate) fn if_modified_since(headers: &HeaderMap<HeaderValue>) -> Option<SystemTime> {
    let value = headers.get(header::IF_MODIFIED_SINCE)?.to_str().ok()?;
    httpdate::parse_http_date(value).ok()
}
