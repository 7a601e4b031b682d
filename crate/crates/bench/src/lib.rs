//! Crawl-versus-harvest benchmarks over a synthetic document root.

pub mod corpus;
pub mod crawl;
pub mod launcher;
pub mod report;
pub mod run;

pub use corpus::{generate_corpus, touch_fraction, CorpusSpec, Manifest, ManifestEntry, SizeDistribution, SizeShape};
pub use crawl::{run_crawl, CrawlOptions, CrawlOutcome, Seed};
pub use launcher::{RunningService, ServiceLauncher};
pub use report::{emit_report, Phase, RunReport, Tool};
pub use run::{crawl, harvest, sweep_page_sizes, update_experiment, SeedMode, UpdateExperiment, UpdateResult, Verb};
