use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use oaifs_core::datestamp;
use oaifs_harvester::{
    default_mirror_base, load_state, save_state, HarvestMetrics, HarvestOptions, HarvestState,
    Harvester, Mirror,
};
use tracing_subscriber::EnvFilter;
use url::Url;

/// Harvest an OAI-PMH repository.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ListIdentifiers; prints one URL per line.
    Identifiers(Common),
    /// ListRecords in oai_didl; rebuilds files under --mirror.
    Records {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mirror: PathBuf,
        /// URL the mirror directory corresponds to (default: the endpoint's parent).
        #[arg(long)]
        mirror_base: Option<String>,
        /// By-reference fetches in flight per page.
        #[arg(long, default_value_t = oaifs_harvester::DEFAULT_CONCURRENCY)]
        concurrency: usize,
    },
}

#[derive(Args)]
struct Common {
    /// OAI-PMH endpoint URL.
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    until: Option<String>,
    #[arg(long)]
    set: Option<String>,
    #[arg(long)]
    metadata_prefix: Option<String>,
    /// Expected page size (the repository decides; mismatches are logged).
    #[arg(long)]
    page_hint: Option<usize>,
    /// Harvest state file; enables incremental harvesting.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Append one CSV row of metrics to this file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Ignore any saved state and harvest everything.
    #[arg(long)]
    baseline: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("harvest: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Options for this run, with `from` taken from saved state when incremental.
fn options(common: &Common, format: &str) -> anyhow::Result<(HarvestOptions, Option<HarvestState>)> {
    let mut opts = HarvestOptions::new(&common.base_url);
    opts.until = common.until.clone();
    opts.set = common.set.clone();
    opts.metadata_prefix = common.metadata_prefix.clone();
    opts.page_hint = common.page_hint;
    opts.from = common.from.clone();

    let previous = match (&common.state, common.baseline) {
        (Some(path), false) => load_state(path)?,
        _ => None,
    };
    if let Some(prev) = &previous {
        if prev.base_url != common.base_url {
            bail!(
                "state file belongs to {}, not {}; use --baseline or another --state",
                prev.base_url,
                common.base_url
            );
        }
        if prev.format != format {
            bail!("state file was written for {}, not {format}", prev.format);
        }
        if opts.from.is_none() {
            opts.from = Some(datestamp::format(&prev.last_response_date));
        }
    }
    Ok((opts, previous))
}

fn finish(
    common: &Common,
    opts: &HarvestOptions,
    format: &str,
    response_date: Option<datestamp::Datestamp>,
    records: usize,
    metrics: &HarvestMetrics,
) -> anyhow::Result<()> {
    if let Some(path) = &common.metrics {
        metrics
            .append_csv(path)
            .with_context(|| format!("writing metrics to {}", path.display()))?;
    }
    if let Some(path) = &common.state {
        let state = HarvestState {
            base_url: common.base_url.clone(),
            last_successful_from: opts.from.as_deref().and_then(datestamp::parse_any),
            last_response_date: response_date.unwrap_or_else(datestamp::now),
            records_seen: records as u64,
            format: format.to_string(),
        };
        save_state(path, &state)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Identifiers(common) => {
            let format = common.metadata_prefix.clone().unwrap_or_else(|| "oai_dc".into());
            let (opts, _) = options(&common, &format)?;
            let result = Harvester::new().harvest_identifiers(&opts)?;
            let mut out = std::io::stdout().lock();
            for id in &result.identifiers {
                writeln!(out, "{id}")?;
            }
            out.flush()?;
            finish(&common, &opts, &format, result.response_date, result.identifiers.len(), &result.metrics)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Records {
            common,
            mirror,
            mirror_base,
            concurrency,
        } => {
            let format = common.metadata_prefix.clone().unwrap_or_else(|| "oai_didl".into());
            if format != "oai_didl" {
                bail!("records can only be mirrored from oai_didl");
            }
            let (opts, _) = options(&common, &format)?;
            let base = match mirror_base {
                Some(b) => Url::parse(&b).with_context(|| format!("--mirror-base {b}"))?,
                None => default_mirror_base(&common.base_url)?,
            };
            let mirror = Mirror::new(mirror, &base);
            let result = Harvester::new()
                .with_concurrency(concurrency)
                .harvest_records(&opts, &mirror)?;
            for path in &result.updated {
                println!("{}", path.display());
            }
            for f in &result.failures {
                eprintln!("harvest: skipped {}: {}", f.identifier, f.reason);
            }
            if !result.failures.is_empty() {
                // State is not advanced, so the failed records are retried next time.
                if let Some(path) = &common.metrics {
                    result.metrics.append_csv(path)?;
                }
                return Ok(ExitCode::FAILURE);
            }
            finish(&common, &opts, &format, result.response_date, result.identifiers.len(), &result.metrics)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
