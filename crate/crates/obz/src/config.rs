//! Server settings from the environment and client settings from flags, environment and a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_SERVER_URL: &str = "http://127.0.0.1:8080";
pub const DEFAULT_DATA_ROOT: &str = "obz-data";
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error("config file {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub data_root: PathBuf,
    pub default_quantile: f64,
}

impl ServerConfig {
    /// Reads `OBZ_BIND`, `OBZ_DATA_ROOT` and `OBZ_DEFAULT_QUANTILE`.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let bind = get("OBZ_BIND").unwrap_or_else(|| DEFAULT_BIND.into());
        let bind = bind
            .parse()
            .map_err(|e| ConfigError::Env { var: "OBZ_BIND", reason: format!("{bind:?}: {e}") })?;
        let data_root = get("OBZ_DATA_ROOT").map_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT), PathBuf::from);
        let default_quantile = match get("OBZ_DEFAULT_QUANTILE") {
            Some(q) => parse_quantile(&q)
                .map_err(|reason| ConfigError::Env { var: "OBZ_DEFAULT_QUANTILE", reason })?,
            None => obz_core::detectors::DEFAULT_QUANTILE,
        };
        Ok(ServerConfig { bind, data_root, default_quantile })
    }
}

pub fn parse_quantile(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(q) if q > 0.0 && q <= 1.0 => Ok(q),
        Ok(q) => Err(format!("{q} outside (0, 1]")),
        Err(e) => Err(format!("{s:?}: {e}")),
    }
}

/// Keys accepted in the client TOML file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ConfigFile {
    pub server_url: Option<String>,
    pub api_token: Option<String>,
    pub default_project: Option<String>,
    pub timeout_secs: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File { path: path.to_owned(), reason: e.to_string() })
    }

    /// An explicitly named file must exist; the default location may be absent.
    pub fn load(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let (path, required) = match explicit {
            Some(p) => (p.to_owned(), true),
            None => match default_config_path() {
                Some(p) => (p, false),
                None => return Ok(ConfigFile::default()),
            },
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text, &path),
            Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(ConfigFile::default()),
            Err(e) => Err(ConfigError::File { path, reason: e.to_string() }),
        }
    }
}

/// `$XDG_CONFIG_HOME/obz/config.toml`, else `~/.config/obz/config.toml`.
pub fn default_config_path() -> Option<PathBuf> {
    let base = std::env::var_os("XDG_CONFIG_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))?;
    Some(base.join("obz").join("config.toml"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub server_url: String,
    pub api_token: Option<String>,
    pub default_project: Option<String>,
    pub timeout: Duration,
}

/// Values already merged from flags and environment (clap handles that order).
#[derive(Debug, Clone, Default)]
pub struct ClientOverrides {
    pub server_url: Option<String>,
    pub api_token: Option<String>,
    pub project: Option<String>,
    pub timeout_secs: Option<u64>,
}

impl ClientConfig {
    pub fn resolve(over: ClientOverrides, file: ConfigFile) -> Result<Self, ConfigError> {
        let server_url = over
            .server_url
            .or(file.server_url)
            .unwrap_or_else(|| DEFAULT_SERVER_URL.into())
            .trim()
            .trim_end_matches('/')
            .to_owned();
        if server_url.is_empty() {
            return Err(ConfigError::Invalid("server_url is empty".into()));
        }
        let timeout_secs = over.timeout_secs.or(file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS);
        if timeout_secs == 0 {
            return Err(ConfigError::Invalid("timeout must be positive".into()));
        }
        Ok(ClientConfig {
            server_url,
            api_token: over.api_token.or(file.api_token).filter(|t| !t.is_empty()),
            default_project: over.project.or(file.default_project).filter(|p| !p.is_empty()),
            timeout: Duration::from_secs(timeout_secs),
        })
    }
}
