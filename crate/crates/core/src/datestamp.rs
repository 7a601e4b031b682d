//! UTC datestamps at second granularity.

use std::time::SystemTime;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SubsecRound, TimeZone, Utc};

pub type Datestamp = DateTime<Utc>;

const SECONDS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";
const DAY_FORMAT: &str = "%Y-%m-%d";

/// 1970-01-01T00:00:00Z, reported as the earliest datestamp of an empty repository.
pub fn epoch() -> Datestamp {
    DateTime::UNIX_EPOCH
}

pub fn format(ts: &Datestamp) -> String {
    ts.format(SECONDS_FORMAT).to_string()
}

pub fn format_day(ts: &Datestamp) -> String {
    ts.format(DAY_FORMAT).to_string()
}

pub fn truncate(ts: Datestamp) -> Datestamp {
    ts.trunc_subsecs(0)
}

pub fn from_system_time(t: SystemTime) -> Datestamp {
    truncate(DateTime::<Utc>::from(t))
}

pub fn now() -> Datestamp {
    truncate(Utc::now())
}

/// Strict `YYYY-MM-DDThh:mm:ssZ`.
pub fn parse_seconds(s: &str) -> Option<Datestamp> {
    if s.len() != 20 || !s.is_ascii() {
        return None;
    }
    NaiveDateTime::parse_from_str(s, SECONDS_FORMAT)
        .ok()
        .map(|naive| Utc.from_utc_datetime(&naive))
        .filter(|ts| format(ts) == s)
}

/// Strict `YYYY-MM-DD`.
pub fn parse_day(s: &str) -> Option<NaiveDate> {
    if s.len() != 10 || !s.is_ascii() {
        return None;
    }
    NaiveDate::parse_from_str(s, DAY_FORMAT)
        .ok()
        .filter(|d| d.format(DAY_FORMAT).to_string() == s)
}

/// Accepts either granularity; a day is widened to its first second.
pub fn parse_any(s: &str) -> Option<Datestamp> {
    parse_seconds(s).or_else(|| {
        parse_day(s).map(|d| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
    })
}
