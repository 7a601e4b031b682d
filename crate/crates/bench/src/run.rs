//! Measured runs against a live service, each reconciled with the access log.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, ensure, Context};
use oaifs_core::datestamp::{self, Datestamp};
use oaifs_harvester::{HarvestOptions, Harvester, Mirror};
use oaifs_service::AccessLogEntry;
use url::Url;

use crate::corpus::{touch_fraction, Manifest};
use crate::crawl::{run_crawl, CrawlOptions, CrawlOutcome, Seed};
use crate::launcher::{RunningService, ServiceLauncher};
use crate::report::{Phase, RunReport, Tool, SWEEP_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    ListIdentifiers,
    ListRecords,
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verb::ListIdentifiers => "ListIdentifiers",
            Verb::ListRecords => "ListRecords",
        })
    }
}

impl FromStr for Verb {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ListIdentifiers" | "identifiers" => Ok(Verb::ListIdentifiers),
            "ListRecords" | "records" => Ok(Verb::ListRecords),
            _ => bail!("unknown verb {s:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    Index,
    Manifest,
}

impl fmt::Display for SeedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SeedMode::Index => "index",
            SeedMode::Manifest => "manifest",
        })
    }
}

impl FromStr for SeedMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index" => Ok(SeedMode::Index),
            "manifest" => Ok(SeedMode::Manifest),
            _ => bail!("unknown seed mode {s:?}"),
        }
    }
}

/// Request counts the service logged during one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoggedCounts {
    pub head: u64,
    pub get: u64,
    pub oai: u64,
    pub bytes: u64,
}

pub fn count_log(entries: &[AccessLogEntry], oai_path: &str) -> LoggedCounts {
    let mut c = LoggedCounts::default();
    for e in entries {
        c.bytes += e.bytes;
        if e.path() == oai_path {
            c.oai += 1;
        } else if e.method == "HEAD" {
            c.head += 1;
        } else if e.method == "GET" {
            c.get += 1;
        }
    }
    c
}

fn oai_path(svc: &RunningService) -> anyhow::Result<String> {
    Ok(Url::parse(svc.oai_url())?.path().to_string())
}

pub fn crawl(
    svc: &RunningService,
    phase: Phase,
    seed: SeedMode,
    manifest: Option<&Manifest>,
    mirror_dir: &Path,
    timestamping: bool,
) -> anyhow::Result<(RunReport, CrawlOutcome)> {
    let oai = oai_path(svc)?;
    let seed_urls = match seed {
        SeedMode::Index => Seed::Index,
        SeedMode::Manifest => {
            let m = manifest.context("a manifest seed needs the corpus manifest")?;
            let base = Url::parse(&format!("{}/", svc.base_url()))?;
            Seed::Urls(
                m.paths()
                    .map(|p| base.join(p).map(String::from))
                    .collect::<Result<_, _>>()?,
            )
        }
    };
    let opts = CrawlOptions {
        seed: seed_urls,
        timestamping,
        exclude: vec![oai.clone()],
    };
    let mark = svc.log_mark()?;
    let outcome = run_crawl(svc.base_url(), mirror_dir, &opts)?;
    let logged = count_log(&svc.entries_since(mark)?, &oai);
    ensure!(
        logged.head == outcome.heads && logged.get == outcome.gets && logged.oai == 0,
        "crawler counted {} HEAD + {} GET but the access log shows {logged:?}",
        outcome.heads,
        outcome.gets
    );
    let report = RunReport {
        tool: Tool::Crawler,
        phase,
        variant: seed.to_string(),
        requests_head: logged.head,
        requests_get: logged.get,
        requests_oai: 0,
        bytes: logged.bytes,
        wall_time: whole_micros(outcome.wall_time),
        files_transferred: outcome.transferred.len() as u64,
        page_size: None,
    };
    Ok((report, outcome))
}

/// What a harvest produced besides its report.
#[derive(Debug, Clone, Default)]
pub struct HarvestRun {
    pub identifiers: Vec<String>,
    pub updated: Vec<PathBuf>,
    pub by_ref_fetches: u64,
    pub response_date: Option<Datestamp>,
    pub restarts: u32,
}

/// One harvest. `mirror_dir` is required for ListRecords; `page_size` is
/// what the service was configured with, recorded for the report.
pub fn harvest(
    svc: &RunningService,
    phase: Phase,
    verb: Verb,
    from: Option<&str>,
    page_size: Option<usize>,
    mirror_dir: Option<&Path>,
) -> anyhow::Result<(RunReport, HarvestRun)> {
    let oai = oai_path(svc)?;
    let mut opts = HarvestOptions::new(svc.oai_url());
    opts.from = from.map(str::to_string);
    opts.page_hint = page_size;
    let mark = svc.log_mark()?;
    let (metrics, run) = match verb {
        Verb::ListIdentifiers => {
            let r = Harvester::new().harvest_identifiers(&opts)?;
            let run = HarvestRun {
                identifiers: r.identifiers,
                response_date: r.response_date,
                restarts: r.restarts,
                ..Default::default()
            };
            (r.metrics, run)
        }
        Verb::ListRecords => {
            let dir = mirror_dir.context("ListRecords needs a mirror directory")?;
            let mirror = Mirror::new(dir, &Url::parse(&format!("{}/", svc.base_url()))?);
            let r = Harvester::new().harvest_records(&opts, &mirror)?;
            if let Some(f) = r.failures.first() {
                bail!("{} records failed, first {}: {}", r.failures.len(), f.identifier, f.reason);
            }
            let run = HarvestRun {
                identifiers: r.identifiers,
                updated: r.updated,
                by_ref_fetches: r.by_ref_fetches,
                response_date: r.response_date,
                restarts: r.restarts,
            };
            (r.metrics, run)
        }
    };
    let logged = count_log(&svc.entries_since(mark)?, &oai);
    ensure!(
        logged.oai + logged.get + logged.head == metrics.http_requests && logged.get == run.by_ref_fetches,
        "harvester counted {} requests ({} by reference) but the access log shows {logged:?}",
        metrics.http_requests,
        run.by_ref_fetches
    );
    let report = RunReport {
        tool: Tool::Harvester,
        phase,
        variant: verb.to_string(),
        requests_head: logged.head,
        requests_get: logged.get,
        requests_oai: logged.oai,
        bytes: logged.bytes,
        wall_time: whole_micros(metrics.wall_time),
        files_transferred: run.identifiers.len() as u64,
        page_size,
    };
    Ok((report, run))
}

/// Reports carry microsecond wall times, the CSV resolution.
fn whole_micros(d: Duration) -> Duration {
    Duration::from_micros(d.as_micros() as u64)
}

fn set_page_size(launcher: &mut ServiceLauncher, verb: Verb, size: usize) {
    let cfg = launcher.config_mut();
    match verb {
        Verb::ListIdentifiers => cfg.page_size_identifiers = size,
        Verb::ListRecords => cfg.page_size_records = size,
    }
}

pub fn median(mut xs: Vec<Duration>) -> Duration {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort();
    xs[xs.len() / 2]
}

/// One sweep point: the report carries the median wall time; `runs` keeps
/// every repetition.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub report: RunReport,
    pub runs: Vec<Duration>,
}

/// A full baseline harvest per page size, `repeats` times each, restarting the
/// service for every run. Request counts must agree across repetitions.
pub fn sweep_page_sizes(
    launcher: &ServiceLauncher,
    verb: Verb,
    sizes: &[usize],
    repeats: usize,
    scratch: &Path,
) -> anyhow::Result<Vec<SweepPoint>> {
    ensure!(repeats >= 1, "need at least one repetition");
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut launcher = launcher.clone();
        set_page_size(&mut launcher, verb, size);
        let mut first: Option<RunReport> = None;
        let mut runs = Vec::with_capacity(repeats);
        for round in 0..repeats {
            let mirror = scratch.join(format!("sweep-{verb}-{size}-{round}"));
            let svc = launcher.start()?;
            let result = harvest(&svc, Phase::Baseline, verb, None, Some(size), Some(&mirror));
            svc.stop()?;
            let _ = fs::remove_dir_all(&mirror);
            let (report, _) = result?;
            runs.push(report.wall_time);
            match &first {
                None => first = Some(report),
                Some(f) => ensure!(
                    (f.requests_oai, f.requests_get, f.files_transferred)
                        == (report.requests_oai, report.requests_get, report.files_transferred),
                    "page size {size}: request counts differ between repetitions"
                ),
            }
        }
        let mut report = first.expect("repeats >= 1");
        report.variant = format!("{verb}{SWEEP_SUFFIX}");
        report.wall_time = median(runs.clone());
        points.push(SweepPoint { report, runs });
    }
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct UpdateExperiment {
    pub seed_mode: SeedMode,
    pub touch_fraction: f64,
    pub touch_mtime: Datestamp,
    pub touch_seed: u64,
    /// `from` for the incremental harvests; between baseline and touch dates.
    pub update_from: String,
}

impl Default for UpdateExperiment {
    fn default() -> Self {
        UpdateExperiment {
            seed_mode: SeedMode::Manifest,
            touch_fraction: 0.25,
            touch_mtime: datestamp::parse_seconds("2002-01-01T00:00:00Z").expect("constant"),
            touch_seed: 7,
            update_from: "2001-01-01".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateResult {
    /// Crawler, ListIdentifiers, ListRecords for the baseline, then the same for the update.
    pub reports: Vec<RunReport>,
    pub touched: Vec<String>,
    pub crawl_mirror: PathBuf,
    pub harvest_mirror: PathBuf,
    pub baseline_crawl: CrawlOutcome,
    pub update_crawl: CrawlOutcome,
    pub baseline_identifiers: HarvestRun,
    pub update_identifiers: HarvestRun,
    pub update_records: HarvestRun,
}

/// The crawl-versus-harvest experiment: baseline, touch a fraction of the
/// files, update. The service restarts between the two rounds.
pub fn update_experiment(
    launcher: &ServiceLauncher,
    manifest: &Manifest,
    exp: &UpdateExperiment,
    work_dir: &Path,
) -> anyhow::Result<UpdateResult> {
    let docroot = launcher.config().docroot.root_path.clone();
    let crawl_mirror = work_dir.join("crawl-mirror");
    let harvest_mirror = work_dir.join("harvest-mirror");
    for d in [&crawl_mirror, &harvest_mirror] {
        ensure!(!d.exists(), "{} already exists", d.display());
    }
    let ids_size = Some(launcher.config().page_size_identifiers);
    let recs_size = Some(launcher.config().page_size_records);
    let mut reports = Vec::new();

    let svc = launcher.start()?;
    let (r, baseline_crawl) = crawl(&svc, Phase::Baseline, exp.seed_mode, Some(manifest), &crawl_mirror, true)?;
    reports.push(r);
    let (r, baseline_identifiers) = harvest(&svc, Phase::Baseline, Verb::ListIdentifiers, None, ids_size, None)?;
    reports.push(r);
    let (r, _) = harvest(&svc, Phase::Baseline, Verb::ListRecords, None, recs_size, Some(&harvest_mirror))?;
    reports.push(r);
    svc.stop()?;

    let touched = touch_fraction(manifest, &docroot, exp.touch_fraction, exp.touch_mtime, exp.touch_seed)?;

    let svc = launcher.start()?;
    let from = Some(exp.update_from.as_str());
    let (r, update_crawl) = crawl(&svc, Phase::Update, exp.seed_mode, Some(manifest), &crawl_mirror, true)?;
    reports.push(r);
    let (r, update_identifiers) = harvest(&svc, Phase::Update, Verb::ListIdentifiers, from, ids_size, None)?;
    reports.push(r);
    let (r, update_records) = harvest(&svc, Phase::Update, Verb::ListRecords, from, recs_size, Some(&harvest_mirror))?;
    reports.push(r);
    svc.stop()?;

    Ok(UpdateResult {
        reports,
        touched,
        crawl_mirror,
        harvest_mirror,
        baseline_crawl,
        update_crawl,
        baseline_identifiers,
        update_identifiers,
        update_records,
    })
}
