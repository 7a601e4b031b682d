use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, LineWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};

/// One served request: `timestamp method target status bytes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessLogEntry {
    pub timestamp: DateTime<Utc>,
    pub method: String,
    /// Request target as received (path plus query string).
    pub target: String,
    pub status: u16,
    /// Body bytes sent.
    pub bytes: u64,
}

impl AccessLogEntry {
    pub fn path(&self) -> &str {
        self.target.split('?').next().unwrap_or_default()
    }

    pub fn query(&self) -> Option<&str> {
        self.target.split_once('?').map(|(_, q)| q)
    }
}

impl fmt::Display for AccessLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.timestamp.to_rfc3339_opts(SecondsFormat::Micros, true),
            self.method,
            self.target,
            self.status,
            self.bytes
        )
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed access log line {line:?}")]
pub struct ParseLogError {
    pub line: String,
}

impl FromStr for AccessLogEntry {
    type Err = ParseLogError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = || ParseLogError { line: line.to_string() };
        let fields: Vec<&str> = line.split(' ').collect();
        let [ts, method, target, status, bytes] = fields[..] else {
            return Err(err());
        };
        Ok(AccessLogEntry {
            timestamp: DateTime::parse_from_rfc3339(ts).map_err(|_| err())?.with_timezone(&Utc),
            method: method.to_string(),
            target: target.to_string(),
            status: status.parse().map_err(|_| err())?,
            bytes: bytes.parse().map_err(|_| err())?,
        })
    }
}

/// Parses a whole log file, skipping blank lines.
pub fn parse_log(text: &str) -> Result<Vec<AccessLogEntry>, ParseLogError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Request log kept in memory and, optionally, appended to a file line by line.
#[derive(Debug)]
pub struct AccessLog {
    memory: Option<Mutex<Vec<AccessLogEntry>>>,
    file: Option<Mutex<LineWriter<File>>>,
}

impl AccessLog {
    pub fn new(path: Option<&Path>, keep_in_memory: bool) -> io::Result<Self> {
        let file = match path {
            Some(p) => Some(Mutex::new(LineWriter::new(
                OpenOptions::new().create(true).append(true).open(p)?,
            ))),
            None => None,
        };
        Ok(AccessLog {
            memory: keep_in_memory.then(|| Mutex::new(Vec::new())),
            file,
        })
    }

    pub fn record(&self, mut entry: AccessLogEntry) {
        // Keep memory and file identical: the line format carries microseconds.
        entry.timestamp = entry.timestamp.trunc_subsecs(6);
        if let Some(file) = &self.file {
            let mut file = file.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(err) = writeln!(file, "{entry}") {
                tracing::warn!(error = %err, "access log write failed");
            }
        }
        if let Some(mem) = &self.memory {
            mem.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
        }
    }

    /// Number of entries held in memory.
    pub fn len(&self) -> usize {
        self.memory
            .as_ref()
            .map_or(0, |m| m.lock().unwrap_or_else(|e| e.into_inner()).len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-memory entries from position `start` on.
    pub fn entries_since(&self, start: usize) -> Vec<AccessLogEntry> {
        self.memory.as_ref().map_or_else(Vec::new, |m| {
            let entries = m.lock().unwrap_or_else(|e| e.into_inner());
            entries.get(start..).unwrap_or_default().to_vec()
        })
    }

    pub fn entries(&self) -> Vec<AccessLogEntry> {
        self.entries_since(0)
    }
}
