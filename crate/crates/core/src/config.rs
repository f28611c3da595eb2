//! INI configuration with the seven sections the toolkit reads:
//!
//! ```ini
//! [cloud_settings]
//! #mapping types could be static,eager,lazy,snohi
//! MAPPING_TYPE=static
//! [storage_settings]
//! swift_host=127.0.0.1
//! [wmsdb_settings]
//! dburl=sqlite:///var/lib/recap/wms.db
//! [recapdb_settings]
//! dburl=sqlite:///var/lib/recap/recap.db
//! [WMS_settings]
//! wms_monitor=PegasusMonitor
//! wms_parser=PegasusParser
//! [WrapperService]
//! endpoint=http://127.0.0.1:5000/service_wrapper/api/v1.0
//! service_user=recap
//! service_password=secret
//! [log_settings]
//! log_conf=info
//! ```
//!
//! `cloud_settings` may also carry `scenario`, a path to a scenario file
//! relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use thiserror::Error;

use crate::mappers::{MappingType, UnknownMappingType};

pub const SECTIONS: [&str; 7] = [
    "cloud_settings",
    "storage_settings",
    "wmsdb_settings",
    "recapdb_settings",
    "WMS_settings",
    "WrapperService",
    "log_settings",
];

const REQUIRED: [(&str, &[&str]); 7] = [
    ("cloud_settings", &["MAPPING_TYPE"]),
    ("storage_settings", &["swift_host"]),
    ("wmsdb_settings", &["dburl"]),
    ("recapdb_settings", &["dburl"]),
    ("WMS_settings", &["wms_monitor", "wms_parser"]),
    ("WrapperService", &["endpoint", "service_user", "service_password"]),
    ("log_settings", &["log_conf"]),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("missing key `{key}` in section [{section}]")]
    MissingKey { section: &'static str, key: &'static str },
    #[error(transparent)]
    MappingType(#[from] UnknownMappingType),
    #[error("unsupported database url `{0}` (expected sqlite:///path or a file path)")]
    UnsupportedDbUrl(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecapConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    mapping_type: MappingType,
    base_dir: PathBuf,
}

impl RecapConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_ini_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut sections = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else { continue };
            let entry: &mut BTreeMap<String, String> = sections.entry(name.to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.to_string(), v.trim().to_string());
            }
        }
        for (section, keys) in REQUIRED {
            let s = sections.get(section).ok_or(ConfigError::MissingSection(section))?;
            for key in keys {
                if !s.contains_key(*key) {
                    return Err(ConfigError::MissingKey { section, key });
                }
            }
        }
        let mapping_type = sections["cloud_settings"]["MAPPING_TYPE"].parse()?;
        Ok(RecapConfig { sections, mapping_type, base_dir: PathBuf::new() })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn required(&self, section: &'static str, key: &'static str) -> &str {
        self.get(section, key).expect("required keys are checked at load")
    }

    pub fn mapping_type(&self) -> MappingType {
        self.mapping_type
    }

    pub fn endpoint(&self) -> &str {
        self.required("WrapperService", "endpoint")
    }

    pub fn service_user(&self) -> &str {
        self.required("WrapperService", "service_user")
    }

    pub fn service_password(&self) -> &str {
        self.required("WrapperService", "service_password")
    }

    pub fn log_conf(&self) -> &str {
        self.required("log_settings", "log_conf")
    }

    /// File backing the provenance store.
    pub fn recap_db_path(&self) -> Result<PathBuf, ConfigError> {
        self.resolve(sqlite_path(self.required("recapdb_settings", "dburl"))?)
    }

    /// Scenario file, if the config names one.
    pub fn scenario_path(&self) -> Option<PathBuf> {
        self.get("cloud_settings", "scenario").map(|p| self.base_dir.join(p))
    }

    fn resolve(&self, p: PathBuf) -> Result<PathBuf, ConfigError> {
        Ok(if p.is_relative() && p.as_os_str() != ":memory:" { self.base_dir.join(p) } else { p })
    }
}

/// `sqlite:///abs/path`, `sqlite://rel/path` or a bare path.
pub fn sqlite_path(url: &str) -> Result<PathBuf, ConfigError> {
    if let Some(rest) = url.strip_prefix("sqlite://") {
        if rest.is_empty() {
            return Err(ConfigError::UnsupportedDbUrl(url.into()));
        }
        return Ok(PathBuf::from(rest));
    }
    if url.contains("://") {
        return Err(ConfigError::UnsupportedDbUrl(url.into()));
    }
    Ok(PathBuf::from(url))
}
