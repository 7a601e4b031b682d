//! Service configuration: a flat `key = value` file, one key per line.
//!
//! ```text
//! # comment
//! docroot = /srv/www
//! listen_address = 127.0.0.1:8080
//! base_url = http://www.example.edu
//! alias = /A => /srv/www/B
//! alias = /B => /srv/www/A
//! page_size_records = 50
//! ```
//!
//! `alias` may repeat; every other key may appear once. Relative paths are
//! resolved against the directory holding the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::codecs::DEFAULT_BYVALUE_THRESHOLD;
use crate::index::{endpoint_patterns, Alias, DocRootConfig};

pub const DEFAULT_PAGE_SIZE_RECORDS: usize = 50;
pub const DEFAULT_PAGE_SIZE_IDENTIFIERS: usize = 500;
pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(86_400);
pub const DEFAULT_ENDPOINT_PATH: &str = "/oai";
pub const DEFAULT_MAX_PENDING_REQUESTS: usize = 512;

/// Environment variable that overrides `listen_address`.
pub const LISTEN_ENV: &str = "OAIFS_LISTEN";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub docroot: DocRootConfig,
    pub listen_address: String,
    /// URL path of the OAI-PMH endpoint, relative to the base URL.
    pub endpoint_path: String,
    pub page_size_records: usize,
    pub page_size_identifiers: usize,
    pub byvalue_threshold: u64,
    pub token_ttl: Duration,
    pub admin_email: String,
    pub repository_name: String,
    pub rescan_interval: Option<Duration>,
    pub access_log: Option<PathBuf>,
    /// Requests beyond this many in flight are answered with 503.
    pub max_pending_requests: usize,
    /// Key mixed into resumptionToken checksums.
    pub token_key: String,
    /// Whether `base_url` was given explicitly or derived from the listen address.
    pub explicit_base_url: bool,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>, listen_address: &str) -> Self {
        ServiceConfig {
            docroot: DocRootConfig::new(root, &format!("http://{listen_address}")),
            listen_address: listen_address.to_string(),
            endpoint_path: DEFAULT_ENDPOINT_PATH.to_string(),
            page_size_records: DEFAULT_PAGE_SIZE_RECORDS,
            page_size_identifiers: DEFAULT_PAGE_SIZE_IDENTIFIERS,
            byvalue_threshold: DEFAULT_BYVALUE_THRESHOLD,
            token_ttl: DEFAULT_TOKEN_TTL,
            admin_email: "admin@localhost".to_string(),
            repository_name: "Document root repository".to_string(),
            rescan_interval: None,
            access_log: None,
            max_pending_requests: DEFAULT_MAX_PENDING_REQUESTS,
            token_key: "oaifs".to_string(),
            explicit_base_url: false,
        }
    }

    /// Absolute URL of the OAI-PMH endpoint.
    pub fn endpoint_url(&self) -> String {
        format!("{}{}", self.docroot.base_url(), self.endpoint_path)
    }

    /// Server-absolute URL path of the endpoint (base path included).
    pub fn endpoint_url_path(&self) -> String {
        format!("{}{}", self.docroot.base_path(), self.endpoint_path)
    }

    /// Rebinds to the address actually bound, deriving `base_url` from it
    /// unless one was configured.
    pub fn bound_to(&mut self, addr: &str) {
        self.listen_address = addr.to_string();
        if !self.explicit_base_url {
            self.docroot.set_base_url(&format!("http://{addr}"));
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.page_size_records == 0 {
            return Err(invalid("page_size_records", "must be at least 1"));
        }
        if self.page_size_identifiers == 0 {
            return Err(invalid("page_size_identifiers", "must be at least 1"));
        }
        if self.token_ttl.is_zero() {
            return Err(invalid("token_ttl", "must be positive"));
        }
        if self.max_pending_requests == 0 {
            return Err(invalid("max_pending_requests", "must be at least 1"));
        }
        if self.listen_address.is_empty() {
            return Err(invalid("listen_address", "missing"));
        }
        if !self.endpoint_path.starts_with('/') || self.endpoint_path.len() < 2 {
            return Err(invalid("endpoint_path", "must be an absolute path such as /oai"));
        }
        let base = self.docroot.base_url();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(invalid("base_url", "must be an absolute http(s) URL"));
        }
        Ok(())
    }

    /// Renders the configuration in the file format `parse` reads.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("docroot", &self.docroot.root_path.display());
        line("listen_address", &self.listen_address);
        if self.explicit_base_url {
            line("base_url", &self.docroot.base_url());
        }
        line("endpoint_path", &self.endpoint_path);
        line(
            "excluded_extensions",
            &self.docroot.excluded_extensions().join(","),
        );
        line(
            "excluded_path_patterns",
            &self.docroot.excluded_path_patterns.join(","),
        );
        for alias in &self.docroot.alias_table {
            line(
                "alias",
                &format!("{} => {}", alias.url_prefix, alias.target.display()),
            );
        }
        line("page_size_records", &self.page_size_records);
        line("page_size_identifiers", &self.page_size_identifiers);
        line("byvalue_threshold", &self.byvalue_threshold);
        line("token_ttl", &self.token_ttl.as_secs());
        line("admin_email", &self.admin_email);
        line("repository_name", &self.repository_name);
        if let Some(iv) = self.rescan_interval {
            line("rescan_interval", &iv.as_secs());
        }
        if let Some(p) = &self.access_log {
            line("access_log", &p.display());
        }
        line("max_pending_requests", &self.max_pending_requests);
        line("token_key", &self.token_key);
        out
    }

    /// Parses configuration text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut docroot: Option<PathBuf> = None;
        let mut listen: Option<String> = None;
        let mut base_url: Option<String> = None;
        let mut endpoint_path: Option<String> = None;
        let mut excluded_extensions: Option<Vec<String>> = None;
        let mut excluded_patterns: Option<Vec<String>> = None;
        let mut aliases = Vec::new();
        let mut cfg = ServiceConfig::new(PathBuf::new(), "127.0.0.1:0");
        let mut seen = std::collections::HashSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: lineno,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key != "alias" && !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line: lineno,
                    message: format!("duplicate key {key}"),
                });
            }
            let resolve = |v: &str| {
                let p = PathBuf::from(v);
                if p.is_absolute() {
                    p
                } else {
                    base_dir.join(p)
                }
            };
            match key {
                "docroot" => docroot = Some(resolve(value)),
                "listen_address" => listen = Some(value.to_string()),
                "base_url" => base_url = Some(value.to_string()),
                "endpoint_path" => endpoint_path = Some(value.to_string()),
                "excluded_extensions" => excluded_extensions = Some(split_list(value)),
                "excluded_path_patterns" => excluded_patterns = Some(split_list(value)),
                "alias" => {
                    let (prefix, target) =
                        value.split_once("=>").ok_or_else(|| ConfigError::Syntax {
                            line: lineno,
                            message: "alias must be `/prefix => path`".into(),
                        })?;
                    aliases.push(Alias::new(prefix.trim(), PathBuf::from(target.trim())));
                }
                "page_size_records" => cfg.page_size_records = number("page_size_records", value)?,
                "page_size_identifiers" => {
                    cfg.page_size_identifiers = number("page_size_identifiers", value)?
                }
                "byvalue_threshold" => cfg.byvalue_threshold = number("byvalue_threshold", value)?,
                "token_ttl" => cfg.token_ttl = Duration::from_secs(number("token_ttl", value)?),
                "admin_email" => cfg.admin_email = value.to_string(),
                "repository_name" => cfg.repository_name = value.to_string(),
                "rescan_interval" => {
                    let secs: u64 = number("rescan_interval", value)?;
                    cfg.rescan_interval = (secs > 0).then(|| Duration::from_secs(secs));
                }
                "access_log" => cfg.access_log = Some(resolve(value)),
                "max_pending_requests" => {
                    cfg.max_pending_requests = number("max_pending_requests", value)?
                }
                "token_key" => cfg.token_key = value.to_string(),
                other => {
                    return Err(ConfigError::Syntax {
                        line: lineno,
                        message: format!("unknown key {other}"),
                    })
                }
            }
        }

        let docroot = docroot.ok_or_else(|| invalid("docroot", "missing"))?;
        let listen = listen.ok_or_else(|| invalid("listen_address", "missing"))?;
        cfg.listen_address = listen;
        cfg.explicit_base_url = base_url.is_some();
        let base_url = base_url.unwrap_or_else(|| format!("http://{}", cfg.listen_address));
        cfg.docroot = DocRootConfig::new(docroot, &base_url);
        if let Some(ep) = endpoint_path {
            cfg.endpoint_path = format!("/{}", ep.trim_matches('/'));
        }
        if let Some(exts) = excluded_extensions {
            cfg.docroot.set_excluded_extensions(exts);
        }
        cfg.docroot.excluded_path_patterns =
            excluded_patterns.unwrap_or_else(|| endpoint_patterns(&cfg.endpoint_path));
        cfg.docroot.alias_table = aliases;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `OAIFS_LISTEN` when set.
    pub fn apply_env_overrides(&mut self) {
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            if !addr.trim().is_empty() {
                self.listen_address = addr.trim().to_string();
                if !self.explicit_base_url {
                    self.docroot
                        .set_base_url(&format!("http://{}", self.listen_address));
                }
            }
        }
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn number<T: std::str::FromStr>(field: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| invalid(field, format!("{value:?}: {e}")))
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ServiceConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    ServiceConfig::parse(&text, base_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ServiceConfig::parse(
            "docroot = /srv/www\nlisten_address = 127.0.0.1:8080\n",
            Path::new("/etc"),
        )
        .unwrap();
        assert_eq!(cfg.page_size_records, 50);
        assert_eq!(cfg.page_size_identifiers, 500);
        assert_eq!(cfg.byvalue_threshold, 1024 * 1024);
        assert_eq!(cfg.token_ttl, Duration::from_secs(86_400));
        assert_eq!(cfg.docroot.base_url(), "http://127.0.0.1:8080");
        assert_eq!(cfg.endpoint_url(), "http://127.0.0.1:8080/oai");
        assert_eq!(cfg.docroot.excluded_extensions(), [".php", ".cgi", ".shtml", ".jsp"]);
        assert_eq!(cfg.docroot.excluded_path_patterns, ["oai", "oai/**"]);
        assert!(cfg.rescan_interval.is_none());
    }

    #[test]
    fn zero_page_size_names_field() {
        let err = ServiceConfig::parse(
            "docroot = /srv\nlisten_address = 127.0.0.1:1\npage_size_records = 0\n",
            Path::new("/"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("page_size_records"), "{err}");
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "docroot /srv\n",
            "docroot = /a\ndocroot = /b\n",
            "docroot = /a\nlisten_address = x\nfrobnicate = 1\n",
            "docroot = /a\nlisten_address = x\nalias = /A\n",
            "docroot = /a\nlisten_address = x\ntoken_ttl = -3\n",
        ] {
            assert!(ServiceConfig::parse(bad, Path::new("/")).is_err(), "{bad}");
        }
        assert!(matches!(
            ServiceConfig::parse("listen_address = x\n", Path::new("/")),
            Err(ConfigError::Invalid { field: "docroot", .. })
        ));
    }

    #[test]
    fn relative_paths_resolve_against_file() {
        let cfg = ServiceConfig::parse(
            "docroot = www\nlisten_address = 127.0.0.1:1\naccess_log = logs/access.log\n",
            Path::new("/etc/oaifs"),
        )
        .unwrap();
        assert_eq!(cfg.docroot.root_path, Path::new("/etc/oaifs/www"));
        assert_eq!(cfg.access_log.as_deref(), Some(Path::new("/etc/oaifs/logs/access.log")));
    }

    #[test]
    fn dump_round_trips() {
        let text = "docroot = /srv/www\nlisten_address = 0.0.0.0:80\nbase_url = http://www.example.edu/\n\
                    endpoint_path = mod_oai\nalias = /A => /srv/www/B\nalias = /B => /srv/www/A\n\
                    page_size_records = 10\npage_size_identifiers = 1000\nbyvalue_threshold = 0\n\
                    token_ttl = 60\nadmin_email = root@example.edu\nrepository_name = Example Dept\n\
                    rescan_interval = 30\naccess_log = /var/log/oai.log\nexcluded_extensions = PHP,.asp\n";
        let cfg = ServiceConfig::parse(text, Path::new("/")).unwrap();
        assert_eq!(cfg.endpoint_path, "/mod_oai");
        assert_eq!(cfg.docroot.excluded_path_patterns, ["mod_oai", "mod_oai/**"]);
        assert_eq!(cfg.docroot.excluded_extensions(), [".php", ".asp"]);
        let again = ServiceConfig::parse(&cfg.dump(), Path::new("/")).unwrap();
        assert_eq!(cfg, again);

        let minimal =
            ServiceConfig::parse("docroot = /srv\nlisten_address = 127.0.0.1:9\n", Path::new("/"))
                .unwrap();
        assert_eq!(
            ServiceConfig::parse(&minimal.dump(), Path::new("/")).unwrap(),
            minimal
        );
    }
}
