use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use filetime::FileTime;
use oaifs_core::datestamp::Datestamp;
use percent_encoding::percent_decode_str;
use url::Url;

#[derive(Debug, thiserror::Error)]
pub enum MirrorError {
    #[error("{url} is not under {base}")]
    OutsideBase { url: String, base: String },
    #[error("{url} has no safe local path")]
    UnsafePath { url: String },
    #[error("mirror write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// What a mirror write did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    /// Same bytes and mtime already present.
    Unchanged,
    /// Same bytes; only the modification time was restamped.
    Restamped,
    Written,
}

/// Maps identifier URLs below `base` onto paths below `dir`, the layout a
/// `wget -P dir` mirror of the same site has.
#[derive(Debug, Clone)]
pub struct Mirror {
    dir: PathBuf,
    base: Url,
}

impl Mirror {
    pub fn new(dir: impl Into<PathBuf>, base: &Url) -> Self {
        let mut base = base.clone();
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        base.set_query(None);
        Mirror { dir: dir.into(), base }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, url: &str) -> Result<PathBuf, MirrorError> {
        let outside = || MirrorError::OutsideBase {
            url: url.to_string(),
            base: self.base.to_string(),
        };
        let parsed = Url::parse(url).map_err(|_| outside())?;
        if parsed.origin() != self.base.origin() {
            return Err(outside());
        }
        let rel = parsed.path().strip_prefix(self.base.path()).ok_or_else(outside)?;
        let mut path = self.dir.clone();
        let mut any = false;
        for seg in rel.split('/') {
            let seg = percent_decode_str(seg)
                .decode_utf8()
                .map_err(|_| MirrorError::UnsafePath { url: url.to_string() })?;
            if seg.is_empty() || seg == "." || seg == ".." || seg.contains(['/', '\\', '\0']) {
                return Err(MirrorError::UnsafePath { url: url.to_string() });
            }
            path.push(seg.as_ref());
            any = true;
        }
        if !any {
            return Err(MirrorError::UnsafePath { url: url.to_string() });
        }
        Ok(path)
    }

    /// Stores `content` at the mirror path of `url` with mtime `datestamp`,
    /// touching nothing when the copy is already current.
    pub fn store(
        &self,
        url: &str,
        content: &[u8],
        datestamp: Datestamp,
    ) -> Result<(PathBuf, WriteOutcome), MirrorError> {
        let path = self.path_for(url)?;
        let io_err = |source| MirrorError::Io {
            path: path.clone(),
            source,
        };
        let mtime = FileTime::from_unix_time(datestamp.timestamp(), 0);
        if let Ok(existing) = fs::read(&path) {
            if existing == content {
                let current = fs::metadata(&path).map(|m| FileTime::from_last_modification_time(&m));
                if current.ok() == Some(mtime) {
                    return Ok((path, WriteOutcome::Unchanged));
                }
                filetime::set_file_mtime(&path, mtime).map_err(io_err)?;
                return Ok((path, WriteOutcome::Restamped));
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let tmp = path.with_file_name(format!(
            ".{}.partial",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("file")
        ));
        fs::write(&tmp, content).map_err(io_err)?;
        filetime::set_file_mtime(&tmp, mtime).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok((path, WriteOutcome::Written))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oaifs_core::datestamp;

    fn mirror(dir: &Path) -> Mirror {
        Mirror::new(dir, &Url::parse("http://h:8080/~u").unwrap())
    }

    #[test]
    fn url_mapping() {
        let m = mirror(Path::new("/m"));
        assert_eq!(m.path_for("http://h:8080/~u/a/b%20c.html").unwrap(), PathBuf::from("/m/a/b c.html"));
        for bad in [
            "http://other:8080/~u/a",
            "http://h:8080/~v/a",
            "http://h:8080/~u/",
            "http://h:8080/~u/a/%00b",
            "http://h:8080/~u/a%2Fb",
            "not a url",
        ] {
            assert!(m.path_for(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn store_is_idempotent() {
        let dir = tempfile::TempDir::new().unwrap();
        let m = mirror(dir.path());
        let t0 = datestamp::parse_seconds("2000-01-01T00:00:00Z").unwrap();
        let t1 = datestamp::parse_seconds("2002-01-01T00:00:00Z").unwrap();
        let url = "http://h:8080/~u/d/f.txt";
        assert_eq!(m.store(url, b"x", t0).unwrap().1, WriteOutcome::Written);
        assert_eq!(m.store(url, b"x", t0).unwrap().1, WriteOutcome::Unchanged);
        assert_eq!(m.store(url, b"x", t1).unwrap().1, WriteOutcome::Restamped);
        assert_eq!(m.store(url, b"y", t1).unwrap().1, WriteOutcome::Written);
        let meta = fs::metadata(dir.path().join("d/f.txt")).unwrap();
        assert_eq!(FileTime::from_last_modification_time(&meta).unix_seconds(), t1.timestamp());
    }
}
