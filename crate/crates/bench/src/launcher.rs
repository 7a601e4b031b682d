//! Starts and stops the repository for a benchmark round, either on a thread
//! of this process or as an `oaifs-serve` child process.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use anyhow::{bail, Context};
use oaifs_core::ServiceConfig;
use oaifs_service::{parse_log, AccessLogEntry, ServiceHandle};

#[derive(Debug, Clone)]
pub struct ServiceLauncher {
    cfg: ServiceConfig,
    /// `oaifs-serve` binary; `None` runs the service in-process.
    server_bin: Option<PathBuf>,
    work_dir: PathBuf,
}

impl ServiceLauncher {
    pub fn in_process(cfg: ServiceConfig) -> Self {
        ServiceLauncher {
            cfg,
            server_bin: None,
            work_dir: std::env::temp_dir(),
        }
    }

    /// Runs `server_bin` as a child, keeping its config and access log in `work_dir`.
    pub fn child(cfg: ServiceConfig, server_bin: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        ServiceLauncher {
            cfg,
            server_bin: Some(server_bin.into()),
            work_dir: work_dir.into(),
        }
    }

    /// `oaifs-serve` installed next to the running executable, if any.
    pub fn sibling_server_bin() -> Option<PathBuf> {
        let exe = std::env::current_exe().ok()?;
        let name = format!("oaifs-serve{}", std::env::consts::EXE_SUFFIX);
        exe.ancestors()
            .skip(1)
            .take(2)
            .map(|d| d.join(&name))
            .find(|p| p.is_file())
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut ServiceConfig {
        &mut self.cfg
    }

    pub fn is_child(&self) -> bool {
        self.server_bin.is_some()
    }

    pub fn start(&self) -> anyhow::Result<RunningService> {
        match &self.server_bin {
            None => {
                let handle = ServiceHandle::start(self.cfg.clone()).context("starting in-process service")?;
                Ok(RunningService {
                    base_url: handle.base_url().to_string(),
                    oai_url: handle.oai_url(),
                    inner: Inner::InProcess(handle),
                })
            }
            Some(bin) => self.spawn(bin),
        }
    }

    fn spawn(&self, bin: &Path) -> anyhow::Result<RunningService> {
        fs::create_dir_all(&self.work_dir)?;
        let work = fs::canonicalize(&self.work_dir)?;
        let stamp = format!(
            "{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap_or_default()
                .as_nanos()
        );
        let log = work.join(format!("access-{stamp}.log"));
        let conf = work.join(format!("service-{stamp}.conf"));
        let mut cfg = self.cfg.clone();
        cfg.access_log = Some(log.clone());
        cfg.listen_address = "127.0.0.1:0".into();
        fs::write(&conf, cfg.dump())?;

        let mut child = Command::new(bin)
            .arg("--config")
            .arg(&conf)
            .env("RUST_LOG", std::env::var("RUST_LOG").unwrap_or_else(|_| "warn".into()))
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .with_context(|| format!("spawning {}", bin.display()))?;
        let stdout = child.stdout.take().expect("piped");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line)?;
        let Some(addr) = line.trim().strip_prefix("listening on ") else {
            let _ = child.kill();
            let _ = child.wait();
            bail!("{} did not start (said {:?})", bin.display(), line.trim());
        };
        let mut bound = cfg.clone();
        bound.bound_to(addr);
        Ok(RunningService {
            base_url: bound.docroot.base_url().to_string(),
            oai_url: bound.endpoint_url(),
            inner: Inner::Child {
                child: ChildGuard(child),
                log,
            },
        })
    }
}

enum Inner {
    InProcess(ServiceHandle),
    Child { child: ChildGuard, log: PathBuf },
}

/// Kills the child if the service is dropped without `stop`.
struct ChildGuard(Child);

impl Drop for ChildGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// A live service plus access to its log.
pub struct RunningService {
    base_url: String,
    oai_url: String,
    inner: Inner,
}

/// Position in the access log; entries after it belong to the next run.
#[derive(Debug, Clone, Copy)]
pub struct LogMark(usize);

impl RunningService {
    /// Base URL of the document root, no trailing slash.
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn oai_url(&self) -> &str {
        &self.oai_url
    }

    pub fn handle(&self) -> Option<&ServiceHandle> {
        match &self.inner {
            Inner::InProcess(h) => Some(h),
            Inner::Child { .. } => None,
        }
    }

    pub fn log_mark(&self) -> anyhow::Result<LogMark> {
        Ok(LogMark(self.all_entries()?.len()))
    }

    pub fn entries_since(&self, mark: LogMark) -> anyhow::Result<Vec<AccessLogEntry>> {
        let mut all = self.all_entries()?;
        let at = mark.0.min(all.len());
        Ok(all.split_off(at))
    }

    fn all_entries(&self) -> anyhow::Result<Vec<AccessLogEntry>> {
        match &self.inner {
            Inner::InProcess(h) => Ok(h.access_log().entries()),
            Inner::Child { log, .. } => {
                let text = match fs::read_to_string(log) {
                    Ok(t) => t,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
                    Err(e) => return Err(e).context("reading access log"),
                };
                parse_log(&text).map_err(|e| anyhow::anyhow!("access log: {e}"))
            }
        }
    }

    pub fn stop(self) -> anyhow::Result<()> {
        match self.inner {
            Inner::InProcess(h) => h.shutdown().context("stopping service"),
            Inner::Child { child, .. } => {
                drop(child);
                Ok(())
            }
        }
    }
}
