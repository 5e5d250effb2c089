use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use craqreg_core::RegistrationConfig;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Environment variable overriding the config file location.
pub const CONFIG_ENV: &str = "CRAQREG_CONFIG";

/// Last-used registration settings as stored on disk and served by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedConfig {
    pub config: RegistrationConfig,
    /// Whether `config` equals the built-in defaults.
    #[serde(default)]
    pub is_default: bool,
}

impl PersistedConfig {
    pub fn new(config: RegistrationConfig) -> Self {
        let is_default = config == RegistrationConfig::default();
        Self { config, is_default }
    }
}

/// `$CRAQREG_CONFIG`, else `$XDG_CONFIG_HOME/craqreg/config.json`, else
/// `$HOME/.config/craqreg/config.json`, else `craqreg-config.json`.
pub fn default_config_path() -> PathBuf {
    if let Some(p) = std::env::var_os(CONFIG_ENV) {
        return PathBuf::from(p);
    }
    if let Some(x) = std::env::var_os("XDG_CONFIG_HOME") {
        return PathBuf::from(x).join("craqreg").join("config.json");
    }
    if let Some(h) = std::env::var_os("HOME") {
        return PathBuf::from(h).join(".config").join("craqreg").join("config.json");
    }
    PathBuf::from("craqreg-config.json")
}

/// Parses a config document: either a bare [`RegistrationConfig`] or a
/// [`PersistedConfig`] wrapper. Missing fields take their defaults.
pub fn parse_config(body: &[u8]) -> Result<RegistrationConfig, ApiError> {
    let mut value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed JSON: {e}")))?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    let cfg: RegistrationConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        ApiError::InvalidConfig {
            message: e.into_inner().to_string(),
            field,
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Config shared by the service, optionally backed by a file.
#[derive(Debug)]
pub struct ConfigStore {
    path: Option<PathBuf>,
    current: RwLock<RegistrationConfig>,
}

impl ConfigStore {
    /// Reads `path` if it holds a valid config; falls back to defaults.
    pub fn open(path: Option<PathBuf>) -> Self {
        let current = path
            .as_deref()
            .filter(|p| p.is_file())
            .and_then(|p| match fs::read(p).map_err(|e| e.to_string()).and_then(|b| parse_config(&b).map_err(|e| e.to_string())) {
                Ok(cfg) => Some(cfg),
                Err(e) => {
                    log::warn!("ignoring config file {}: {e}", p.display());
                    None
                }
            })
            .unwrap_or_default();
        Self {
            path,
            current: RwLock::new(current),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self) -> PersistedConfig {
        PersistedConfig::new(self.current.read().expect("config lock").clone())
    }

    pub fn set(&self, cfg: RegistrationConfig) -> Result<PersistedConfig, ApiError> {
        cfg.validate()?;
        let persisted = PersistedConfig::new(cfg);
        self.persist(&persisted)?;
        *self.current.write().expect("config lock") = persisted.config.clone();
        Ok(persisted)
    }

    pub fn reset(&self) -> Result<PersistedConfig, ApiError> {
        self.set(RegistrationConfig::default())
    }

    fn persist(&self, cfg: &PersistedConfig) -> Result<(), ApiError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |e: std::io::Error| ApiError::Internal(format!("writing {}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(cfg).expect("config serializes")).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}
