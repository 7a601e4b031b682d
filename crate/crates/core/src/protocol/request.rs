use std::collections::HashSet;
use std::fmt;

use chrono::{Duration, TimeZone, Utc};

use super::error::{ErrorCode, OaiError};
use crate::datestamp::{self, Datestamp};
use crate::index::is_valid_set_spec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Identify,
    ListMetadataFormats,
    ListSets,
    ListIdentifiers,
    ListRecords,
    GetRecord,
}

impl Verb {
    pub const ALL: [Verb; 6] = [
        Verb::Identify,
        Verb::ListMetadataFormats,
        Verb::ListSets,
        Verb::ListIdentifiers,
        Verb::ListRecords,
        Verb::GetRecord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Identify => "Identify",
            Verb::ListMetadataFormats => "ListMetadataFormats",
            Verb::ListSets => "ListSets",
            Verb::ListIdentifiers => "ListIdentifiers",
            Verb::ListRecords => "ListRecords",
            Verb::GetRecord => "GetRecord",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Arguments the verb accepts, besides `verb` itself.
    pub fn allowed_arguments(self) -> &'static [&'static str] {
        match self {
            Verb::Identify => &[],
            Verb::ListMetadataFormats => &["identifier"],
            Verb::ListSets => &["resumptionToken"],
            Verb::ListIdentifiers | Verb::ListRecords => {
                &["metadataPrefix", "from", "until", "set", "resumptionToken"]
            }
            Verb::GetRecord => &["identifier", "metadataPrefix"],
        }
    }

    pub fn required_arguments(self) -> &'static [&'static str] {
        match self {
            Verb::ListIdentifiers | Verb::ListRecords => &["metadataPrefix"],
            Verb::GetRecord => &["identifier", "metadataPrefix"],
            _ => &[],
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const ARGUMENT_NAMES: [&str; 6] = [
    "identifier",
    "metadataPrefix",
    "from",
    "until",
    "set",
    "resumptionToken",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Day,
    Seconds,
}

/// A `from`/`until` bound. Day values are widened to whole days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DateArg {
    pub instant: Datestamp,
    pub granularity: Granularity,
}

impl DateArg {
    pub fn seconds(instant: Datestamp) -> Self {
        DateArg {
            instant: datestamp::truncate(instant),
            granularity: Granularity::Seconds,
        }
    }

    fn parse(value: &str, upper: bool) -> Option<Self> {
        if let Some(ts) = datestamp::parse_seconds(value) {
            return Some(DateArg::seconds(ts));
        }
        let day = datestamp::parse_day(value)?;
        let start = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0)?);
        let instant = if upper {
            start + Duration::seconds(86_399)
        } else {
            start
        };
        Some(DateArg {
            instant,
            granularity: Granularity::Day,
        })
    }

    /// The value as it appears on the wire.
    pub fn to_wire(&self) -> String {
        match self.granularity {
            Granularity::Day => datestamp::format_day(&self.instant),
            Granularity::Seconds => datestamp::format(&self.instant),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OaiRequest {
    pub verb: Verb,
    pub identifier: Option<String>,
    pub metadata_prefix: Option<String>,
    pub from: Option<DateArg>,
    pub until: Option<DateArg>,
    pub set: Option<String>,
    pub resumption_token: Option<String>,
}

impl OaiRequest {
    pub fn new(verb: Verb) -> Self {
        OaiRequest {
            verb,
            identifier: None,
            metadata_prefix: None,
            from: None,
            until: None,
            set: None,
            resumption_token: None,
        }
    }

    /// Attributes of the `request` element, in protocol order.
    pub fn echo_attributes(&self) -> Vec<(&'static str, String)> {
        let mut attrs = vec![("verb", self.verb.as_str().to_string())];
        let mut push = |name, v: Option<String>| {
            if let Some(v) = v {
                attrs.push((name, v));
            }
        };
        push("identifier", self.identifier.clone());
        push("metadataPrefix", self.metadata_prefix.clone());
        push("from", self.from.map(|d| d.to_wire()));
        push("until", self.until.map(|d| d.to_wire()));
        push("set", self.set.clone());
        push("resumptionToken", self.resumption_token.clone());
        attrs
    }

    /// Wire-form `(name, value)` pairs; parsing them yields an equal request.
    pub fn to_params(&self) -> Vec<(String, String)> {
        self.echo_attributes()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

/// Validates raw `(name, value)` pairs against the verb/argument matrix.
pub fn parse_request<I, K, V>(params: I) -> Result<OaiRequest, OaiError>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let params: Vec<(String, String)> = params
        .into_iter()
        .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
        .collect();

    let verbs: Vec<&str> = params
        .iter()
        .filter(|(k, _)| k == "verb")
        .map(|(_, v)| v.as_str())
        .collect();
    let verb = match verbs.as_slice() {
        [] => return Err(OaiError::new(ErrorCode::BadVerb, "missing verb argument")),
        [v] => Verb::parse(v).ok_or_else(|| {
            OaiError::new(ErrorCode::BadVerb, format!("illegal verb {v:?}"))
        })?,
        _ => return Err(OaiError::new(ErrorCode::BadVerb, "verb argument repeated")),
    };

    let mut seen = HashSet::new();
    let mut req = OaiRequest::new(verb);
    for (name, value) in params.iter().filter(|(k, _)| k != "verb") {
        if !ARGUMENT_NAMES.contains(&name.as_str()) {
            return Err(OaiError::bad_argument(format!("illegal argument {name:?}")));
        }
        if !seen.insert(name.as_str()) {
            return Err(OaiError::bad_argument(format!("argument {name} repeated")));
        }
        if !verb.allowed_arguments().contains(&name.as_str()) {
            return Err(OaiError::bad_argument(format!(
                "{verb} does not accept {name}"
            )));
        }
        if value.is_empty() {
            return Err(OaiError::bad_argument(format!("empty value for {name}")));
        }
        match name.as_str() {
            "identifier" => req.identifier = Some(value.clone()),
            "metadataPrefix" => req.metadata_prefix = Some(value.clone()),
            "from" => {
                req.from = Some(DateArg::parse(value, false).ok_or_else(|| {
                    OaiError::bad_argument(format!("malformed from date {value:?}"))
                })?)
            }
            "until" => {
                req.until = Some(DateArg::parse(value, true).ok_or_else(|| {
                    OaiError::bad_argument(format!("malformed until date {value:?}"))
                })?)
            }
            "set" => {
                if !is_valid_set_spec(value) {
                    return Err(OaiError::bad_argument(format!("malformed setSpec {value:?}")));
                }
                req.set = Some(value.clone());
            }
            "resumptionToken" => req.resumption_token = Some(value.clone()),
            _ => unreachable!("filtered above"),
        }
    }

    if req.resumption_token.is_some() {
        if seen.len() > 1 {
            return Err(OaiError::bad_argument(
                "resumptionToken is an exclusive argument",
            ));
        }
        return Ok(req);
    }
    for required in verb.required_arguments() {
        if !seen.contains(required) {
            return Err(OaiError::bad_argument(format!(
                "{verb} requires {required}"
            )));
        }
    }
    if let (Some(from), Some(until)) = (req.from, req.until) {
        if from.granularity != until.granularity {
            return Err(OaiError::bad_argument(
                "from and until must share the same granularity",
            ));
        }
        if from.instant > until.instant {
            return Err(OaiError::bad_argument("from is later than until"));
        }
    }
    Ok(req)
}
