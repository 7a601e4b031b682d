use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::time::Duration;

use oaifs_core::datestamp::Datestamp;
use serde::{Deserialize, Serialize};

/// What a completed harvest leaves behind for the next incremental run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestState {
    pub base_url: String,
    /// `from` of the last completed harvest; `None` for a baseline.
    pub last_successful_from: Option<Datestamp>,
    /// responseDate of that harvest's first response; the next `from`.
    pub last_response_date: Datestamp,
    pub records_seen: u64,
    pub format: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("cannot read harvest state {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("harvest state {path} is corrupt ({reason}); rerun with --baseline to start over")]
    Corrupt { path: PathBuf, reason: String },
}

/// `Ok(None)` when no state exists yet, meaning the next harvest is a baseline.
pub fn load_state(path: &Path) -> Result<Option<HarvestState>, StateError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(StateError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    serde_json::from_str(&text).map(Some).map_err(|e| StateError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes through a temporary file and a rename, so a crash never leaves a
/// half-written state behind.
pub fn save_state(path: &Path, state: &HarvestState) -> Result<(), StateError> {
    let io_err = |source| StateError::Io {
        path: path.to_path_buf(),
        source,
    };
    let json = serde_json::to_string_pretty(state).expect("state serializes");
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, json).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// Counters for one harvest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestMetrics {
    pub http_requests: u64,
    pub bytes_received: u64,
    pub records_received: u64,
    #[serde(rename = "wall_time_us", with = "micros")]
    pub wall_time: Duration,
    pub pages: u64,
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

impl HarvestMetrics {
    /// Appends one CSV row, writing the header first if the file is new or empty.
    pub fn append_csv(&self, path: &Path) -> io::Result<()> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(self).map_err(io::Error::other)?;
        w.flush()
    }

    pub fn read_csv(path: &Path) -> io::Result<Vec<HarvestMetrics>> {
        let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
        r.deserialize().collect::<Result<_, _>>().map_err(io::Error::other)
    }
}
