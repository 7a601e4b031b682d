use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    Crawler,
    Harvester,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Baseline,
    Update,
}

/// One measured run. Request counts are reconciled against the access log
/// before a report is produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: Tool,
    pub phase: Phase,
    /// Crawl seed (`index`, `manifest`) or harvest verb.
    pub variant: String,
    pub requests_head: u64,
    pub requests_get: u64,
    pub requests_oai: u64,
    /// Response body bytes sent by the service.
    pub bytes: u64,
    #[serde(rename = "wall_time_us", with = "micros")]
    pub wall_time: Duration,
    /// Crawler: files downloaded. Harvester: items listed.
    pub files_transferred: u64,
    pub page_size: Option<usize>,
}

impl RunReport {
    pub fn total_requests(&self) -> u64 {
        self.requests_head + self.requests_get + self.requests_oai
    }
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

pub const CSV_HEADER: &str = "tool,phase,variant,requests_head,requests_get,requests_oai,bytes,wall_time_us,files_transferred,page_size";

pub fn write_csv(reports: &[RunReport], path: &Path) -> anyhow::Result<()> {
    fs::write(path, to_csv(reports)?).with_context(|| format!("writing {}", path.display()))
}

pub fn to_csv(reports: &[RunReport]) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in reports {
        w.serialize(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(format!("{CSV_HEADER}\n{body}"))
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<RunReport>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> anyhow::Result<Vec<RunReport>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// `emit_report`: writes the CSV and returns the summary tables.
pub fn emit_report(reports: &[RunReport], out_path: &Path) -> anyhow::Result<String> {
    write_csv(reports, out_path)?;
    Ok(summary(reports))
}

fn ms(d: Duration) -> String {
    format!("{:.1}", d.as_secs_f64() * 1000.0)
}

/// A tool x phase grid of the fixed-size runs, then the page-size sweep.
pub fn summary(reports: &[RunReport]) -> String {
    let mut out = String::new();
    let (swept, grid): (Vec<&RunReport>, Vec<&RunReport>) = reports.iter().partition(|r| is_sweep(r));
    if !grid.is_empty() {
        let _ = writeln!(
            out,
            "{:<10} {:<16} {:<9} {:>7} {:>7} {:>6} {:>7} {:>12} {:>10}",
            "tool", "variant", "phase", "HEAD", "GET", "OAI", "files", "bytes", "wall ms"
        );
        for r in grid {
            let _ = writeln!(
                out,
                "{:<10} {:<16} {:<9} {:>7} {:>7} {:>6} {:>7} {:>12} {:>10}",
                r.tool, r.variant, r.phase, r.requests_head, r.requests_get, r.requests_oai,
                r.files_transferred, r.bytes, ms(r.wall_time)
            );
        }
    }
    if !swept.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>12} {:>10}",
            "verb", "page size", "requests", "bytes", "wall ms"
        );
        for r in swept {
            let _ = writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>12} {:>10}",
                r.variant.trim_end_matches(SWEEP_SUFFIX),
                r.page_size.unwrap_or(0),
                r.total_requests(),
                r.bytes,
                ms(r.wall_time)
            );
        }
    }
    if out.is_empty() {
        out.push_str("no runs\n");
    }
    out
}

/// Sweep rows are harvests marked with a `sweep` suffix on the variant.
fn is_sweep(r: &RunReport) -> bool {
    r.variant.ends_with(SWEEP_SUFFIX)
}

pub const SWEEP_SUFFIX: &str = "/sweep";

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Tool::Crawler => "crawler",
            Tool::Harvester => "harvester",
        })
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Phase::Baseline => "baseline",
            Phase::Update => "update",
        })
    }
}

impl FromStr for Phase {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Phase::Baseline),
            "update" => Ok(Phase::Update),
            _ => anyhow::bail!("unknown phase {s:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(tool: Tool, phase: Phase, page_size: Option<usize>) -> RunReport {
        RunReport {
            tool,
            phase,
            variant: "index".into(),
            requests_head: 1000,
            requests_get: 250,
            requests_oai: 0,
            bytes: 123_456,
            wall_time: Duration::from_micros(98_765),
            files_transferred: 250,
            page_size,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            report(Tool::Crawler, Phase::Baseline, None),
            report(Tool::Harvester, Phase::Update, Some(50)),
        ];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().nth(1).unwrap(), "crawler,baseline,index,1000,250,0,123456,98765,250,");
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = to_csv(&[]).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&text).unwrap().is_empty());
        assert_eq!(summary(&[]), "no runs\n");
    }
}
