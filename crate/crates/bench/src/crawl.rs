//! A recursive, timestamping mirror crawler with the behaviour of
//! `wget -r --no-parent -N`: one HEAD per already-mirrored URL, a GET only
//! when the server copy is newer or a different size.

use std::collections::{HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant, SystemTime};

use anyhow::{bail, Context};
use filetime::FileTime;
use oaifs_harvester::Mirror;
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::header::{CONTENT_LENGTH, CONTENT_TYPE, LAST_MODIFIED, LOCATION};
use reqwest::redirect::Policy;
use scraper::{Html, Selector};
use url::Url;

#[derive(Debug, Clone)]
pub enum Seed {
    /// Start from `index.html` and follow links.
    Index,
    /// Start from every listed URL (the "find . -type f" seed), still following links.
    Urls(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct CrawlOptions {
    pub seed: Seed,
    pub timestamping: bool,
    /// URL path prefixes never requested (the OAI endpoint).
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CrawlOutcome {
    pub heads: u64,
    pub gets: u64,
    /// Body bytes received by GETs.
    pub bytes: u64,
    /// URLs whose content was downloaded.
    pub transferred: Vec<String>,
    /// Every URL examined, in crawl order.
    pub visited: Vec<String>,
    /// URLs that answered with an error status.
    pub errors: Vec<(String, u16)>,
    pub wall_time: Duration,
}

/// Crawls the site under `base_url` into `mirror_dir`.
pub fn run_crawl(base_url: &str, mirror_dir: &Path, opts: &CrawlOptions) -> anyhow::Result<CrawlOutcome> {
    let base = Url::parse(&format!("{}/", base_url.trim_end_matches('/')))?;
    let mirror = Mirror::new(mirror_dir, &base);
    let client = Client::builder()
        .redirect(Policy::none())
        .timeout(Duration::from_secs(30))
        .build()?;
    let links = Selector::parse("a[href], link[href], area[href], img[src], frame[src], iframe[src], script[src]")
        .expect("static selector");

    let start = Instant::now();
    let mut out = CrawlOutcome::default();
    let mut queue: VecDeque<Url> = VecDeque::new();
    let mut seen: HashSet<String> = HashSet::new();
    let seeds = match &opts.seed {
        Seed::Index => vec![base.join("index.html")?],
        Seed::Urls(urls) => urls.iter().map(|u| Url::parse(u)).collect::<Result<_, _>>()?,
    };
    for u in seeds {
        if seen.insert(u.to_string()) {
            queue.push_back(u);
        }
    }

    let mut contacted = false;
    while let Some(url) = queue.pop_front() {
        let key = url.to_string();
        out.visited.push(key.clone());
        let local = match mirror.path_for(&key) {
            Ok(p) => p,
            Err(_) => continue,
        };

        // Freshness check against the local copy.
        let mut fetch = true;
        let mut html = looks_like_html(&key);
        if opts.timestamping {
            if let Ok(meta) = fs::metadata(&local) {
                let resp = send(client.head(url.clone()), &key, contacted)?;
                contacted = true;
                out.heads += 1;
                let status = resp.status();
                if status.is_redirection() {
                    enqueue_redirect(&resp, &url, &base, opts, &mut seen, &mut queue);
                    continue;
                }
                if !status.is_success() {
                    out.errors.push((key, status.as_u16()));
                    continue;
                }
                html = is_html(&resp).unwrap_or(html);
                let remote_time = header_time(&resp);
                let remote_len = resp
                    .headers()
                    .get(CONTENT_LENGTH)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.parse::<u64>().ok());
                let local_time = FileTime::from_last_modification_time(&meta).unix_seconds();
                let newer = remote_time.map_or(true, |t| t > local_time);
                let resized = remote_len.is_some_and(|n| n != meta.len());
                fetch = newer || resized;
            }
        }

        let body: Vec<u8> = if fetch {
            let resp = send(client.get(url.clone()), &key, contacted)?;
            contacted = true;
            out.gets += 1;
            let status = resp.status();
            if status.is_redirection() {
                enqueue_redirect(&resp, &url, &base, opts, &mut seen, &mut queue);
                continue;
            }
            if !status.is_success() {
                out.errors.push((key, status.as_u16()));
                continue;
            }
            html = is_html(&resp).unwrap_or(html);
            let mtime = header_time(&resp);
            let bytes = resp.bytes().with_context(|| format!("reading {key}"))?.to_vec();
            out.bytes += bytes.len() as u64;
            if let Some(parent) = local.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&local, &bytes).with_context(|| format!("writing {}", local.display()))?;
            if let Some(t) = mtime {
                filetime::set_file_mtime(&local, FileTime::from_unix_time(t, 0))?;
            }
            out.transferred.push(key.clone());
            bytes
        } else if html {
            // wget re-reads the local copy to keep recursing.
            fs::read(&local).unwrap_or_default()
        } else {
            Vec::new()
        };

        if html {
            let doc = Html::parse_document(&String::from_utf8_lossy(&body));
            for el in doc.select(&links) {
                let v = el.value();
                let Some(raw) = v.attr("href").or_else(|| v.attr("src")) else {
                    continue;
                };
                if let Ok(target) = url.join(raw) {
                    consider(target, &base, opts, &mut seen, &mut queue);
                }
            }
        }
    }
    out.wall_time = start.elapsed();
    Ok(out)
}

fn send(req: RequestBuilder, url: &str, contacted: bool) -> anyhow::Result<Response> {
    match req.send() {
        Ok(r) => Ok(r),
        Err(e) if !contacted => bail!("service unreachable at {url}: {e}"),
        Err(e) => Err(e).with_context(|| format!("requesting {url}")),
    }
}

fn consider(mut target: Url, base: &Url, opts: &CrawlOptions, seen: &mut HashSet<String>, queue: &mut VecDeque<Url>) {
    target.set_fragment(None);
    if target.origin() != base.origin() || !target.path().starts_with(base.path()) {
        return;
    }
    if opts.exclude.iter().any(|p| target.path().starts_with(p.as_str())) {
        return;
    }
    if seen.insert(target.to_string()) {
        queue.push_back(target);
    }
}

fn enqueue_redirect(
    resp: &Response,
    from: &Url,
    base: &Url,
    opts: &CrawlOptions,
    seen: &mut HashSet<String>,
    queue: &mut VecDeque<Url>,
) {
    if let Some(loc) = resp.headers().get(LOCATION).and_then(|v| v.to_str().ok()) {
        if let Ok(target) = from.join(loc) {
            consider(target, base, opts, seen, queue);
        }
    }
}

fn header_time(resp: &Response) -> Option<i64> {
    let v = resp.headers().get(LAST_MODIFIED)?.to_str().ok()?;
    let t = httpdate::parse_http_date(v).ok()?;
    Some(t.duration_since(SystemTime::UNIX_EPOCH).ok()?.as_secs() as i64)
}

fn is_html(resp: &Response) -> Option<bool> {
    let ct = resp.headers().get(CONTENT_TYPE)?.to_str().ok()?;
    Some(ct.starts_with("text/html") || ct.starts_with("application/xhtml"))
}

fn looks_like_html(url: &str) -> bool {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    path.ends_with(".html") || path.ends_with(".htm") || path.ends_with('/')
}
