use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use sha2::{Digest, Sha256};
use tracing::{debug, warn};
use walkdir::{DirEntry, WalkDir};

use super::{media_type_of, DocRootConfig, IndexError, RepositorySnapshot, ResourceRecord};
use crate::datestamp;

/// Walks the document root and builds a snapshot.
///
/// Hidden entries, excluded extensions and patterns, and symbolic links whose
/// target lies outside the root are skipped. An unreadable file is logged and
/// left out; only an unusable root aborts the scan.
pub fn scan(config: &DocRootConfig) -> Result<RepositorySnapshot, IndexError> {
    let root = &config.root_path;
    let config_err = |reason: String| IndexError::Config {
        path: root.clone(),
        reason,
    };
    let meta = std::fs::metadata(root).map_err(|e| config_err(e.to_string()))?;
    if !meta.is_dir() {
        return Err(config_err("not a directory".into()));
    }
    std::fs::read_dir(root).map_err(|e| config_err(e.to_string()))?;
    let canonical_root = root
        .canonicalize()
        .map_err(|e| config_err(e.to_string()))?;
    let excluded = Exclusions::new(config)?;

    let walker = WalkDir::new(root)
        .follow_links(true)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !is_hidden(e) && within_root(e, &canonical_root));

    let mut records = Vec::new();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                warn!(error = %err, "skipping unreadable entry");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(rel_path) = relative_path(root, entry.path()) else {
            warn!(path = %entry.path().display(), "skipping non-UTF-8 path");
            continue;
        };
        if excluded.is_excluded(&rel_path) {
            debug!(%rel_path, "excluded");
            continue;
        }
        match read_record(config, entry.path(), rel_path) {
            Ok(rec) => records.push(rec),
            Err(err) => warn!(path = %entry.path().display(), error = %err, "skipping unreadable file"),
        }
    }

    mark_shadowed(config, &mut records);
    Ok(RepositorySnapshot::from_records(records, datestamp::now()))
}

/// Compiled exclusion rules of a document root: dynamic-source extensions
/// and path globs.
#[derive(Debug, Clone)]
pub struct Exclusions {
    extensions: Vec<String>,
    globs: GlobSet,
}

impl Exclusions {
    pub fn new(config: &DocRootConfig) -> Result<Self, IndexError> {
        Ok(Exclusions {
            extensions: config.excluded_extensions().to_vec(),
            globs: build_globset(&config.excluded_path_patterns)?,
        })
    }

    /// Whether a root-relative path (`/`-separated) is kept out of the index.
    pub fn is_excluded(&self, rel_path: &str) -> bool {
        let lower = rel_path.to_ascii_lowercase();
        self.extensions.iter().any(|ext| lower.ends_with(ext)) || self.globs.is_match(rel_path)
    }
}

fn build_globset(patterns: &[String]) -> Result<GlobSet, IndexError> {
    let mut builder = GlobSetBuilder::new();
    for pattern in patterns {
        let glob = globset::GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .or_else(|_| Glob::new(pattern))
            .map_err(|source| IndexError::Pattern {
                pattern: pattern.clone(),
                source,
            })?;
        builder.add(glob);
    }
    builder.build().map_err(|source| IndexError::Pattern {
        pattern: patterns.join(","),
        source,
    })
}

fn is_hidden(entry: &DirEntry) -> bool {
    entry.depth() > 0
        && entry
            .file_name()
            .to_str()
            .is_some_and(|name| name.starts_with('.'))
}

fn within_root(entry: &DirEntry, canonical_root: &Path) -> bool {
    if !entry.path_is_symlink() {
        return true;
    }
    match entry.path().canonicalize() {
        Ok(target) if target.starts_with(canonical_root) => true,
        Ok(target) => {
            debug!(link = %entry.path().display(), target = %target.display(), "symlink escapes root");
            false
        }
        Err(_) => false,
    }
}

fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut parts = Vec::new();
    for comp in rel.components() {
        parts.push(comp.as_os_str().to_str()?);
    }
    Some(parts.join("/"))
}

fn read_record(config: &DocRootConfig, path: &Path, rel_path: String) -> io::Result<ResourceRecord> {
    let mut file = File::open(path)?;
    let modified = file.metadata()?.modified()?;
    let mut hasher = Sha256::new();
    let mut size = 0u64;
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        size += n as u64;
    }
    Ok(ResourceRecord {
        url: config.url_for(&rel_path),
        media_type: media_type_of(&rel_path),
        rel_path,
        datestamp: datestamp::from_system_time(modified),
        size_bytes: size,
        digest: hex::encode(hasher.finalize()),
        shadowed: false,
    })
}

/// A record is shadowed when an alias claims its URL path or another record
/// carries the same URL.
fn mark_shadowed(config: &DocRootConfig, records: &mut [ResourceRecord]) {
    let base_path = config.base_path().to_string();
    let mut seen: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, rec) in records.iter_mut().enumerate() {
        let url_path = format!("{base_path}{}", super::url_path_for(&rec.rel_path));
        if config
            .alias_table
            .iter()
            .any(|alias| alias.claims(&url_path))
        {
            rec.shadowed = true;
        }
        seen.entry(rec.url.clone()).or_default().push(i);
    }
    for positions in seen.into_values().filter(|p| p.len() > 1) {
        for i in positions {
            records[i].shadowed = true;
        }
    }
}
