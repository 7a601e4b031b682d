use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use filetime::FileTime;
use oaifs_core::codecs::{decode_http_header, encode_http_header};
use oaifs_core::{datestamp, Alias, ServiceConfig, SERVER_TOKEN};
use oaifs_service::{parse_log, RefreshOutcome, ServiceHandle};
use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, IF_MODIFIED_SINCE};
use reqwest::StatusCode;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn unix(s: &str) -> i64 {
    datestamp::parse_any(s).unwrap().timestamp()
}

fn write(root: &Path, rel: &str, content: &[u8], mtime: &str) {
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(&path, content).unwrap();
    filetime::set_file_mtime(&path, FileTime::from_unix_time(unix(mtime), 0)).unwrap();
}

fn touch(root: &Path, rel: &str, mtime: &str) {
    filetime::set_file_mtime(root.join(rel), FileTime::from_unix_time(unix(mtime), 0)).unwrap();
}

fn corpus() -> TempDir {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    write(root, "index.html", b"<a href=\"docs/a.html\">a</a>", "2000-01-01");
    write(root, "docs/a.html", b"<p>a</p>", "2000-01-01");
    write(root, "docs/b.txt", &[b'b'; 1024], "2000-01-01");
    write(root, "docs/empty.txt", b"", "2000-01-01");
    write(root, "img/logo.png", &(0..=255u8).collect::<Vec<_>>(), "2000-01-01");
    write(root, "space dir/file name.txt", b"spaced", "2000-01-01");
    write(root, "script.php", b"<?php echo 1; ?>", "2000-01-01");
    for i in 0..40 {
        write(root, &format!("bulk/f{i:02}.txt"), format!("bulk {i}").repeat(50).as_bytes(), "2000-01-01");
    }
    dir
}

fn start(root: &Path, tweak: impl FnOnce(&mut ServiceConfig)) -> ServiceHandle {
    let mut cfg = ServiceConfig::new(root, "127.0.0.1:0");
    tweak(&mut cfg);
    ServiceHandle::start(cfg).unwrap()
}

fn client() -> Client {
    Client::builder()
        .redirect(reqwest::redirect::Policy::none())
        .timeout(Duration::from_secs(30))
        .build()
        .unwrap()
}

fn text_of(xml: &str, tag: &str) -> Vec<String> {
    let (open, close) = (format!("<{tag}>"), format!("</{tag}>"));
    xml.match_indices(&open)
        .map(|(i, _)| {
            let rest = &xml[i + open.len()..];
            rest[..rest.find(&close).unwrap()].to_string()
        })
        .collect()
}

fn token_of(xml: &str) -> Option<String> {
    let i = xml.find("<resumptionToken")?;
    let rest = &xml[i..];
    let gt = rest.find('>').unwrap();
    if rest[..gt].ends_with('/') {
        return None;
    }
    Some(rest[gt + 1..rest.find("</resumptionToken>").unwrap()].to_string())
}

fn error_of(xml: &str) -> Option<String> {
    let i = xml.find("<error code=\"")? + 13;
    Some(xml[i..i + xml[i..].find('"').unwrap()].to_string())
}

fn without_response_date(xml: &str) -> String {
    let a = xml.find("<responseDate>").unwrap();
    let b = xml.find("</responseDate>").unwrap();
    format!("{}{}", &xml[..a], &xml[b..])
}

fn oai(c: &Client, svc: &ServiceHandle, query: &str) -> String {
    let resp = c.get(format!("{}?{query}", svc.oai_url())).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/xml"));
    resp.text().unwrap()
}

fn harvest(c: &Client, svc: &ServiceHandle, verb: &str, prefix: &str) -> Vec<String> {
    let mut xml = oai(c, svc, &format!("verb={verb}&metadataPrefix={prefix}"));
    let mut out = text_of(&xml, "identifier");
    while let Some(t) = token_of(&xml) {
        xml = oai(c, svc, &format!("verb={verb}&resumptionToken={t}"));
        assert_eq!(error_of(&xml), None);
        out.extend(text_of(&xml, "identifier"));
    }
    out
}

/// Sends a request line verbatim, bypassing client-side path normalization.
fn raw_status(svc: &ServiceHandle, target: &str) -> u16 {
    let mut s = TcpStream::connect(svc.addr()).unwrap();
    write!(s, "GET {target} HTTP/1.1\r\nHost: {}\r\nConnection: close\r\n\r\n", svc.addr()).unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).unwrap();
    buf.split(' ').nth(1).unwrap().parse().unwrap()
}

#[test]
fn identify_and_in_band_errors() {
    let dir = corpus();
    let svc = start(dir.path(), |c| c.repository_name = "Test repo".into());
    let c = client();
    let xml = oai(&c, &svc, "verb=Identify");
    assert_eq!(text_of(&xml, "repositoryName"), ["Test repo"]);
    assert_eq!(text_of(&xml, "earliestDatestamp"), ["2000-01-01T00:00:00Z"]);
    assert_eq!(text_of(&xml, "baseURL"), [svc.oai_url()]);

    let xml = oai(&c, &svc, "verb=Frobnicate");
    assert_eq!(error_of(&xml).as_deref(), Some("badVerb"));
    let xml = oai(&c, &svc, "verb=GetRecord&identifier=nope&metadataPrefix=oai_dc");
    assert_eq!(error_of(&xml).as_deref(), Some("idDoesNotExist"));
}

#[test]
fn post_matches_get() {
    let dir = corpus();
    let svc = start(dir.path(), |_| {});
    let c = client();
    for q in ["verb=ListIdentifiers&metadataPrefix=oai_dc&set=mime:text", "verb=Identify", "verb=Nope"] {
        let get = oai(&c, &svc, q);
        let post = c
            .post(svc.oai_url())
            .header("content-type", "application/x-www-form-urlencoded")
            .body(q.to_string())
            .send()
            .unwrap();
        assert_eq!(post.status(), StatusCode::OK);
        assert_eq!(without_response_date(&post.text().unwrap()), without_response_date(&get));
    }
    let put = c.put(svc.oai_url()).body("verb=Identify").send().unwrap();
    assert_eq!(put.status(), StatusCode::METHOD_NOT_ALLOWED);
}

#[test]
fn conditional_get() {
    let dir = corpus();
    touch(dir.path(), "docs/b.txt", "2002-01-01");
    let svc = start(dir.path(), |_| {});
    let c = client();
    let ims = "Mon, 01 Jan 2001 00:00:00 GMT";

    let old = format!("{}/docs/a.html", svc.base_url());
    assert_eq!(c.head(&old).header(IF_MODIFIED_SINCE, ims).send().unwrap().status(), StatusCode::NOT_MODIFIED);
    assert_eq!(c.get(&old).header(IF_MODIFIED_SINCE, ims).send().unwrap().status(), StatusCode::NOT_MODIFIED);
    let exact = "Sat, 01 Jan 2000 00:00:00 GMT";
    assert_eq!(c.get(&old).header(IF_MODIFIED_SINCE, exact).send().unwrap().status(), StatusCode::NOT_MODIFIED);
    let before = "Fri, 31 Dec 1999 23:59:59 GMT";
    assert_eq!(c.get(&old).header(IF_MODIFIED_SINCE, before).send().unwrap().status(), StatusCode::OK);

    let touched = format!("{}/docs/b.txt", svc.base_url());
    let resp = c.get(&touched).header(IF_MODIFIED_SINCE, ims).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["last-modified"], "Tue, 01 Jan 2002 00:00:00 GMT");
    assert_eq!(resp.bytes().unwrap().as_ref(), &[b'b'; 1024][..]);

    let head = c.head(&touched).send().unwrap();
    assert_eq!(head.headers()["content-length"], "1024");
    assert_eq!(head.bytes().unwrap().len(), 0);
}

#[test]
fn not_found_and_traversal() {
    let dir = corpus();
    let svc = start(dir.path(), |_| {});
    assert_eq!(raw_status(&svc, "/../etc/passwd"), 404);
    assert_eq!(raw_status(&svc, "/docs/../../etc/passwd"), 404);
    assert_eq!(raw_status(&svc, "/%2e%2e/etc/passwd"), 404);
    assert_eq!(raw_status(&svc, "/missing.html"), 404);
    assert_eq!(raw_status(&svc, "/script.php"), 404);
    assert_eq!(raw_status(&svc, "/docs/a.html"), 200);
    assert_eq!(raw_status(&svc, "/space%20dir/file%20name.txt"), 200);
}

#[cfg(unix)]
#[test]
fn unreadable_file_is_forbidden() {
    use std::os::unix::fs::PermissionsExt;
    let dir = corpus();
    let svc = start(dir.path(), |_| {});
    let path = dir.path().join("docs/a.html");
    fs::set_permissions(&path, fs::Permissions::from_mode(0o000)).unwrap();
    if fs::read(&path).is_ok() {
        // Running with privileges that bypass file modes; nothing to observe.
        return;
    }
    assert_eq!(raw_status(&svc, "/docs/a.html"), 403);
}

#[test]
fn directories() {
    let dir = corpus();
    let svc = start(dir.path(), |_| {});
    let c = client();
    let root = c.get(format!("{}/", svc.base_url())).send().unwrap();
    assert_eq!(root.text().unwrap(), "<a href=\"docs/a.html\">a</a>");

    let moved = c.get(format!("{}/docs", svc.base_url())).send().unwrap();
    assert_eq!(moved.status(), StatusCode::MOVED_PERMANENTLY);
    assert_eq!(moved.headers()["location"], "/docs/");

    let listing = c.get(format!("{}/space%20dir/", svc.base_url())).send().unwrap();
    assert!(listing.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    assert!(listing.text().unwrap().contains("href=\"/space%20dir/file%20name.txt\""));

    let listing = c.get(format!("{}/docs/", svc.base_url())).send().unwrap().text().unwrap();
    for f in ["a.html", "b.txt", "empty.txt"] {
        assert!(listing.contains(&format!("href=\"/docs/{f}\"")), "{listing}");
    }
}

#[test]
fn header_block_matches_live_get() {
    let dir = corpus();
    let svc = start(dir.path(), |_| {});
    let c = client();
    let snap = svc.snapshot();
    assert_eq!(snap.len(), 46);
    for rec in snap.records() {
        let resp = c.get(&rec.url).send().unwrap();
        assert_eq!(resp.status(), StatusCode::OK, "{}", rec.url);
        let headers: HeaderMap = resp.headers().clone();
        let body = resp.bytes().unwrap();
        let block = decode_http_header(encode_http_header(rec).as_bytes()).unwrap();

        assert_eq!(headers["content-type"], block.content_type.as_str());
        assert_eq!(headers["content-length"], block.content_length.to_string().as_str());
        assert_eq!(
            httpdate::parse_http_date(headers["last-modified"].to_str().unwrap()).unwrap(),
            std::time::UNIX_EPOCH + Duration::from_secs(block.last_modified.timestamp() as u64)
        );
        assert_eq!(headers["server"], block.server.as_str());
        assert_eq!(headers["server"], SERVER_TOKEN);
        assert_eq!(Some(headers["digest"].to_str().unwrap()), block.digest_header.as_deref());

        assert_eq!(hex::encode(Sha256::digest(&body)), rec.digest);
        assert_eq!(body.len() as u64, rec.size_bytes);
        let expected = base64::engine::general_purpose::STANDARD.encode(Sha256::digest(&body));
        assert_eq!(headers["digest"], format!("SHA-256={expected}").as_str());
    }
}

#[test]
fn aliases_are_honoured() {
    let dir = corpus();
    let root = dir.path().to_path_buf();
    let svc = start(&root, |c| {
        c.docroot.alias_table.push(Alias::new("/docs/a.html", root.join("docs/b.txt")));
    });
    let c = client();
    let body = c.get(format!("{}/docs/a.html", svc.base_url())).send().unwrap().bytes().unwrap();
    assert_eq!(body.as_ref(), &[b'b'; 1024][..]);
    let shadowed: Vec<_> = svc.snapshot().records().iter().filter(|r| r.shadowed).map(|r| r.rel_path.clone()).collect();
    assert_eq!(shadowed, ["docs/a.html"]);
}

#[test]
fn refresh_keeps_or_replaces_snapshot() {
    let dir = corpus();
    let svc = start(dir.path(), |c| c.page_size_identifiers = 10);
    let c = client();
    let first = oai(&c, &svc, "verb=ListIdentifiers&metadataPrefix=oai_dc");
    let token = token_of(&first).unwrap();
    let next = format!("verb=ListIdentifiers&resumptionToken={token}");

    assert_eq!(svc.refresh(), RefreshOutcome::Unchanged);
    assert_eq!(error_of(&oai(&c, &svc, &next)), None);

    touch(dir.path(), "docs/b.txt", "2002-01-01");
    assert!(matches!(svc.refresh(), RefreshOutcome::Replaced { .. }));
    assert_eq!(error_of(&oai(&c, &svc, &next)).as_deref(), Some("badResumptionToken"));

    let id_before = svc.snapshot().snapshot_id().to_string();
    let moved = dir.path().with_extension("moved");
    fs::rename(dir.path(), &moved).unwrap();
    assert!(matches!(svc.refresh(), RefreshOutcome::Failed(_)));
    assert_eq!(svc.snapshot().snapshot_id(), id_before);
    assert_eq!(error_of(&oai(&c, &svc, "verb=Identify")), None);
    fs::rename(&moved, dir.path()).unwrap();
}

#[test]
fn periodic_rescan() {
    let dir = corpus();
    let svc = start(dir.path(), |c| c.rescan_interval = Some(Duration::from_millis(100)));
    let before = svc.snapshot().snapshot_id().to_string();
    write(dir.path(), "late.txt", b"late", "2003-01-01");
    let deadline = std::time::Instant::now() + Duration::from_secs(10);
    while svc.snapshot().snapshot_id() == before {
        assert!(std::time::Instant::now() < deadline, "rescan never happened");
        std::thread::sleep(Duration::from_millis(50));
    }
    assert!(svc.snapshot().get(&format!("{}/late.txt", svc.base_url())).is_some());
}

#[test]
fn concurrent_equals_sequential() {
    let dir = corpus();
    let svc = start(dir.path(), |c| c.page_size_records = 7);
    let c = client();
    let urls: Vec<String> = svc.snapshot().records().iter().map(|r| r.url.clone()).collect();
    let fetch_all = |c: &Client| -> BTreeMap<String, Vec<u8>> {
        urls.iter().map(|u| (u.clone(), c.get(u).send().unwrap().bytes().unwrap().to_vec())).collect()
    };
    let seq_records = harvest(&c, &svc, "ListRecords", "oai_didl");
    let seq_files = fetch_all(&c);

    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for _ in 0..4 {
            handles.push(s.spawn(|| (Some(harvest(&client(), &svc, "ListRecords", "oai_didl")), None)));
            handles.push(s.spawn(|| (None, Some(fetch_all(&client())))));
        }
        for h in handles {
            match h.join().unwrap() {
                (Some(records), _) => assert_eq!(records, seq_records),
                (_, Some(files)) => assert_eq!(files, seq_files),
                _ => unreachable!(),
            }
        }
    });
}

#[test]
fn access_log_accounts_every_request() {
    let dir = corpus();
    let log_path = dir.path().parent().unwrap().join(format!(
        "{}.log",
        dir.path().file_name().unwrap().to_string_lossy()
    ));
    let svc = start(dir.path(), |c| c.access_log = Some(log_path.clone()));
    let c = client();
    let start = svc.access_log().len();
    let body = oai(&c, &svc, "verb=Identify");
    let head = c.head(format!("{}/docs/b.txt", svc.base_url())).send().unwrap();
    assert_eq!(head.status(), StatusCode::OK);
    let got = c.get(format!("{}/docs/b.txt", svc.base_url())).send().unwrap().bytes().unwrap();
    c.get(format!("{}/nope", svc.base_url())).send().unwrap();

    let entries = svc.access_log().entries_since(start);
    let summary: Vec<_> = entries.iter().map(|e| (e.method.as_str(), e.path(), e.status, e.bytes)).collect();
    assert_eq!(
        summary,
        [
            ("GET", "/oai", 200, body.len() as u64),
            ("HEAD", "/docs/b.txt", 200, 0),
            ("GET", "/docs/b.txt", 200, got.len() as u64),
            ("GET", "/nope", 404, entries[3].bytes),
        ]
    );
    assert_eq!(entries[0].query(), Some("verb=Identify"));
    let from_file = parse_log(&fs::read_to_string(&log_path).unwrap()).unwrap();
    assert_eq!(from_file, svc.access_log().entries());
    drop(svc);
    fs::remove_file(log_path).unwrap();
}

#[test]
fn overload_answers_503() {
    let dir = TempDir::new().unwrap();
    for i in 0..60 {
        write(dir.path(), &format!("f{i}.bin"), &vec![i as u8; 64 * 1024], "2000-01-01");
    }
    let svc = start(dir.path(), |c| {
        c.max_pending_requests = 1;
        c.page_size_records = 60;
    });
    let mut saw_503 = false;
    for _ in 0..20 {
        let statuses: Vec<(StatusCode, Option<String>)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    s.spawn(|| {
                        let r = client()
                            .get(format!("{}?verb=ListRecords&metadataPrefix=oai_didl", svc.oai_url()))
                            .send()
                            .unwrap();
                        let retry = r.headers().get("retry-after").map(|v| v.to_str().unwrap().to_string());
                        (r.status(), retry)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (status, retry) in &statuses {
            match *status {
                StatusCode::OK => {}
                StatusCode::SERVICE_UNAVAILABLE => {
                    assert_eq!(retry.as_deref(), Some("1"));
                    saw_503 = true;
                }
                other => panic!("unexpected {other}"),
            }
        }
        if saw_503 {
            break;
        }
    }
    assert!(saw_503, "no request was ever refused");
}
