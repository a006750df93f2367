//! `key = value` service configuration.
//!
//! Relative paths resolve against the directory holding the config file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub theme_model: Option<PathBuf>,
    pub caption_model: Option<PathBuf>,
    pub lsh_index: Option<PathBuf>,
    /// Directory of default class images named `<class>.<ext>`.
    pub images: Option<PathBuf>,
    /// Seeds caption sampling and random theme/class picks.
    pub seed: u64,
    pub cache_capacity: usize,
    pub cache_ttl: Duration,
    pub session_idle: Duration,
    pub upload_limit_bytes: usize,
    /// Fresh generations tried on a cache miss before answering 409.
    pub fresh_attempts: usize,
    /// Refill class buffers in the background after serving.
    pub refill: bool,
    /// Fill every class buffer when artifacts are installed.
    pub warm_on_start: bool,
    pub temperature: f64,
}

impl ServiceConfig {
    /// Defaults with no artifact paths.
    pub fn new(seed: u64) -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            theme_model: None,
            caption_model: None,
            lsh_index: None,
            images: None,
            seed,
            cache_capacity: 32,
            cache_ttl: Duration::from_secs(600),
            session_idle: Duration::from_secs(1800),
            upload_limit_bytes: 5 * 1024 * 1024,
            fresh_attempts: 32,
            refill: true,
            warm_on_start: false,
            temperature: 1.0,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ServiceConfig::new(0);
        let mut seed = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Syntax {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<u64, ConfigError> {
                v.parse().map_err(|_| err(format!("{key}: not a non-negative integer: {v:?}")))
            };
            let path = || Some(base.join(value));
            match key {
                "listen" => {
                    cfg.listen = value
                        .parse()
                        .map_err(|_| err(format!("listen: not a socket address: {value:?}")))?
                }
                "theme_model" => cfg.theme_model = path(),
                "caption_model" => cfg.caption_model = path(),
                "lsh_index" => cfg.lsh_index = path(),
                "images" => cfg.images = path(),
                "seed" => seed = Some(num(value)?),
                "cache_capacity" => cfg.cache_capacity = num(value)? as usize,
                "cache_ttl_secs" => cfg.cache_ttl = Duration::from_secs(num(value)?),
                "session_idle_secs" => cfg.session_idle = Duration::from_secs(num(value)?),
                "upload_limit_bytes" => cfg.upload_limit_bytes = num(value)? as usize,
                "fresh_attempts" => cfg.fresh_attempts = num(value)? as usize,
                "refill" => cfg.refill = parse_bool(value).ok_or_else(|| err(format!("refill: {value:?}")))?,
                "warm_on_start" => {
                    cfg.warm_on_start =
                        parse_bool(value).ok_or_else(|| err(format!("warm_on_start: {value:?}")))?
                }
                "temperature" => {
                    cfg.temperature = value
                        .parse::<f64>()
                        .ok()
                        .filter(|t| t.is_finite() && *t > 0.0)
                        .ok_or_else(|| err(format!("temperature must be positive: {value:?}")))?
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        cfg.seed = seed.ok_or(ConfigError::Missing("seed"))?;
        Ok(cfg)
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = "# demo\nlisten = 0.0.0.0:9000\nseed = 7\ntheme_model = themes.json\ncache_capacity = 4\nrefill = false\n";
        let cfg = ServiceConfig::parse(text, Path::new("/srv/memeify")).unwrap();
        assert_eq!(cfg.listen.port(), 9000);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.theme_model.unwrap(), Path::new("/srv/memeify/themes.json"));
        assert_eq!(cfg.cache_capacity, 4);
        assert!(!cfg.refill);
        assert_eq!(cfg.upload_limit_bytes, 5 * 1024 * 1024);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(matches!(ServiceConfig::parse("", base), Err(ConfigError::Missing("seed"))));
        assert!(matches!(
            ServiceConfig::parse("seed = 1\nbogus = 2", base),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(ServiceConfig::parse("seed = -1", base).is_err());
        assert!(ServiceConfig::parse("seed = 1\ntemperature = 0", base).is_err());
        assert!(ServiceConfig::parse("seed 1", base).is_err());
    }
}
