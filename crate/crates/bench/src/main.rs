use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use oaifs_bench::corpus::{manifest_path_for, SizeShape};
use oaifs_bench::report::{self, RunReport};
use oaifs_bench::{
    emit_report, generate_corpus, sweep_page_sizes, touch_fraction, update_experiment, CorpusSpec, Manifest,
    SeedMode, ServiceLauncher, SizeDistribution, UpdateExperiment, Verb,
};
use oaifs_core::{datestamp, ServiceConfig};
use tracing_subscriber::EnvFilter;

/// Crawl-versus-harvest benchmarks.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    Gen(GenArgs),
    /// Set the mtime of a seeded random fraction of the corpus.
    Touch {
        #[arg(long)]
        docroot: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value = "2002-01-01T00:00:00Z")]
        mtime: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Baseline, touch, update: crawler versus harvester.
    Run {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Scratch directory for the two mirrors; must not contain them yet.
        #[arg(long)]
        work: PathBuf,
        #[arg(long, default_value = "manifest")]
        seed_mode: SeedMode,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long, default_value = "2002-01-01T00:00:00Z")]
        touch_mtime: String,
        #[arg(long, default_value_t = 7)]
        touch_seed: u64,
        #[arg(long, default_value = "2001-01-01")]
        from: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full baseline harvests over a list of page sizes.
    Sweep {
        #[command(flatten)]
        server: ServerArgs,
        #[arg(long)]
        verb: Verb,
        #[arg(long, value_delimiter = ',', default_value = "1,10,50,100,500")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        work: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary tables for report CSVs, optionally merging them.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.manifest.json` beside the corpus.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    files: usize,
    #[arg(long, default_value_t = 0.3)]
    html_fraction: f64,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 64)]
    min_bytes: u64,
    #[arg(long, default_value_t = 16384)]
    max_bytes: u64,
    /// uniform or log-uniform.
    #[arg(long, default_value = "log-uniform")]
    shape: String,
    #[arg(long, default_value_t = 8)]
    fanout: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "2000-01-01T00:00:00Z")]
    baseline: String,
    #[arg(long, default_value_t = 0.0)]
    orphan_fraction: f64,
}

#[derive(Args)]
struct ServerArgs {
    #[arg(long)]
    docroot: PathBuf,
    #[arg(long, default_value_t = oaifs_core::config::DEFAULT_PAGE_SIZE_IDENTIFIERS)]
    page_size_identifiers: usize,
    #[arg(long, default_value_t = oaifs_core::config::DEFAULT_PAGE_SIZE_RECORDS)]
    page_size_records: usize,
    #[arg(long, default_value_t = oaifs_core::codecs::DEFAULT_BYVALUE_THRESHOLD)]
    byvalue_threshold: u64,
    /// Service binary to run as a child; defaults to `oaifs-serve` beside this one.
    #[arg(long)]
    server_bin: Option<PathBuf>,
    /// Run the service on a thread of this process instead.
    #[arg(long, conflicts_with = "server_bin")]
    in_process: bool,
}

impl ServerArgs {
    fn launcher(&self, work: &Path) -> anyhow::Result<ServiceLauncher> {
        let root = self
            .docroot
            .canonicalize()
            .with_context(|| format!("docroot {}", self.docroot.display()))?;
        let mut cfg = ServiceConfig::new(root, "127.0.0.1:0");
        cfg.page_size_identifiers = self.page_size_identifiers;
        cfg.page_size_records = self.page_size_records;
        cfg.byvalue_threshold = self.byvalue_threshold;
        let bin = if self.in_process {
            None
        } else {
            self.server_bin.clone().or_else(ServiceLauncher::sibling_server_bin)
        };
        Ok(match bin {
            Some(bin) => ServiceLauncher::child(cfg, bin, work),
            None => ServiceLauncher::in_process(cfg),
        })
    }
}

fn date(s: &str) -> anyhow::Result<datestamp::Datestamp> {
    datestamp::parse_any(s).with_context(|| format!("not a UTC datestamp: {s}"))
}

fn manifest_for(docroot: &Path, explicit: Option<PathBuf>) -> anyhow::Result<Manifest> {
    Manifest::load(&explicit.unwrap_or_else(|| manifest_path_for(docroot)))
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Gen(a) => {
            let shape = match a.shape.as_str() {
                "uniform" => SizeShape::Uniform,
                "log-uniform" => SizeShape::LogUniform,
                other => anyhow::bail!("unknown size shape {other:?}"),
            };
            let spec = CorpusSpec {
                file_count: a.files,
                html_fraction: a.html_fraction,
                max_depth: a.max_depth,
                size_distribution: SizeDistribution {
                    min_bytes: a.min_bytes,
                    max_bytes: a.max_bytes,
                    shape,
                },
                link_fanout: a.fanout,
                seed: a.seed,
                baseline_mtime: date(&a.baseline)?,
                orphan_fraction: a.orphan_fraction,
            };
            let manifest = generate_corpus(&spec, &a.out)?;
            let path = a.manifest.unwrap_or_else(|| manifest_path_for(&a.out));
            manifest.save(&path)?;
            let orphans = manifest.files.iter().filter(|f| f.orphan).count();
            println!(
                "{} files ({} orphaned) in {}; manifest {}",
                manifest.files.len(),
                orphans,
                a.out.display(),
                path.display()
            );
        }
        Command::Touch {
            docroot,
            manifest,
            fraction,
            mtime,
            seed,
        } => {
            let m = manifest_for(&docroot, manifest)?;
            for rel in touch_fraction(&m, &docroot, fraction, date(&mtime)?, seed)? {
                println!("{rel}");
            }
        }
        Command::Run {
            server,
            manifest,
            work,
            seed_mode,
            fraction,
            touch_mtime,
            touch_seed,
            from,
            out,
        } => {
            let m = manifest_for(&server.docroot, manifest)?;
            std::fs::create_dir_all(&work)?;
            let launcher = server.launcher(&work)?;
            let exp = UpdateExperiment {
                seed_mode,
                touch_fraction: fraction,
                touch_mtime: date(&touch_mtime)?,
                touch_seed,
                update_from: from,
            };
            let result = update_experiment(&launcher, &m, &exp, &work)?;
            print!("{}", emit_report(&result.reports, &out)?);
        }
        Command::Sweep {
            server,
            verb,
            sizes,
            repeats,
            work,
            out,
        } => {
            std::fs::create_dir_all(&work)?;
            let launcher = server.launcher(&work)?;
            let points = sweep_page_sizes(&launcher, verb, &sizes, repeats, &work)?;
            let reports: Vec<RunReport> = points.into_iter().map(|p| p.report).collect();
            print!("{}", emit_report(&reports, &out)?);
        }
        Command::Report { inputs, out } => {
            let mut all = Vec::new();
            for path in &inputs {
                all.extend(report::read_csv(path)?);
            }
            match out {
                Some(path) => print!("{}", emit_report(&all, &path)?),
                None => print!("{}", report::summary(&all)),
            }
        }
    }
    Ok(())
}
