use std::fs;
use std::path::{Path, PathBuf};

use cryptosearch_core::crypto::{Iv, DEFAULT_BCRYPT_COST};
use cryptosearch_core::workflow::{WorkflowConfig, DEFAULT_INDEX_FILE_NAME};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_TTP_URL: &str = "http://127.0.0.1:8700";
pub const DEFAULT_STORAGE_ROOT: &str = "cryptosearch-data";
pub const MEMORY_STORAGE: &str = "memory";

const ENV_PREFIX: &str = "CRYPTOSEARCH_";

/// Where stored blobs live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StorageRoot {
    Memory,
    Dir(PathBuf),
}

impl StorageRoot {
    fn parse(s: &str) -> Self {
        if s == MEMORY_STORAGE {
            StorageRoot::Memory
        } else {
            StorageRoot::Dir(PathBuf::from(s))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliConfig {
    pub ttp_url: String,
    pub storage_root: StorageRoot,
    pub session_path: PathBuf,
    pub cost: u32,
    pub index_file_name: String,
    pub iv: Iv,
}

/// One configuration layer. Every key is optional; later layers win.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub ttp_url: Option<String>,
    pub storage_root: Option<String>,
    pub session_path: Option<PathBuf>,
    pub cost: Option<u32>,
    pub index_file_name: Option<String>,
    pub iv: Option<String>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn from_env(var: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let get = |key: &str| var(&format!("{ENV_PREFIX}{key}")).filter(|v| !v.is_empty());
        let cost = match get("COST") {
            Some(v) => Some(
                v.parse()
                    .map_err(|_| CliError::usage(format!("{ENV_PREFIX}COST: not a number: {v:?}")))?,
            ),
            None => None,
        };
        Ok(PartialConfig {
            ttp_url: get("TTP_URL"),
            storage_root: get("STORAGE_ROOT"),
            session_path: get("SESSION_PATH").map(PathBuf::from),
            cost,
            index_file_name: get("INDEX_FILE_NAME"),
            iv: get("IV"),
        })
    }

    fn overlay(self, top: PartialConfig) -> PartialConfig {
        PartialConfig {
            ttp_url: top.ttp_url.or(self.ttp_url),
            storage_root: top.storage_root.or(self.storage_root),
            session_path: top.session_path.or(self.session_path),
            cost: top.cost.or(self.cost),
            index_file_name: top.index_file_name.or(self.index_file_name),
            iv: top.iv.or(self.iv),
        }
    }
}

fn default_session_path(home: Option<String>) -> PathBuf {
    match home {
        Some(h) if !h.is_empty() => Path::new(&h).join(".cryptosearch").join("session.json"),
        _ => PathBuf::from(".cryptosearch-session.json"),
    }
}

impl CliConfig {
    /// Merges defaults, then `file`, then `env`, then `flags`.
    pub fn resolve(
        file: Option<PartialConfig>,
        env: PartialConfig,
        flags: PartialConfig,
        home: Option<String>,
    ) -> Result<Self, CliError> {
        let merged = file.unwrap_or_default().overlay(env).overlay(flags);
        let iv = match merged.iv {
            Some(hex) => Iv::from_hex(&hex).map_err(|e| CliError::usage(format!("iv: {e}")))?,
            None => Iv::default(),
        };
        let cost = merged.cost.unwrap_or(DEFAULT_BCRYPT_COST);
        if !(4..=31).contains(&cost) {
            return Err(CliError::usage(format!("cost must be in 4..=31, got {cost}")));
        }
        let index_file_name = merged
            .index_file_name
            .unwrap_or_else(|| DEFAULT_INDEX_FILE_NAME.to_owned());
        if index_file_name.trim().is_empty() {
            return Err(CliError::usage("index_file_name is empty"));
        }
        Ok(CliConfig {
            ttp_url: merged.ttp_url.unwrap_or_else(|| DEFAULT_TTP_URL.to_owned()),
            storage_root: StorageRoot::parse(
                merged.storage_root.as_deref().unwrap_or(DEFAULT_STORAGE_ROOT),
            ),
            session_path: merged.session_path.unwrap_or_else(|| default_session_path(home)),
            cost,
            index_file_name,
            iv,
        })
    }

    pub fn workflow(&self) -> WorkflowConfig {
        WorkflowConfig {
            iv: self.iv,
            index_file_name: self.index_file_name.clone(),
            bcrypt_cost: self.cost,
            ..WorkflowConfig::default()
        }
    }
}
