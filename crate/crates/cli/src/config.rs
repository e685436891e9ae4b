//! Shared config file for all four executables.
//!
//! A flat TOML document; every key mirrors the long flag of the same name
//! with dashes turned into underscores. Flags win over the file.
//!
//! ```toml
//! listen = "0.0.0.0:7001"
//! peer = "c2.internal:7002"
//! table = "people.pprq"
//! share = "share1.key"
//! parallelism = 8
//! allow = ["bob", "carol"]
//! timeout_secs = 120
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    // Network.
    pub listen: Option<String>,
    pub peer: Option<String>,
    pub c1: Option<String>,
    pub c2: Option<String>,
    pub timeout_secs: Option<u64>,
    pub sessions: Option<usize>,
    // Keys and data.
    pub table: Option<PathBuf>,
    pub pk: Option<PathBuf>,
    pub sk: Option<PathBuf>,
    pub share: Option<PathBuf>,
    pub keys: Option<PathBuf>,
    pub key_bits: Option<u32>,
    // Owner.
    pub bits: Option<u32>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub m: Option<u32>,
    pub m_list: Option<Vec<u32>>,
    pub trials: Option<usize>,
    // Queries.
    pub k: Option<u32>,
    pub alpha: Option<u64>,
    pub beta: Option<u64>,
    pub sort: Option<bool>,
    // Sessions.
    pub user: Option<String>,
    pub protocol: Option<u8>,
    pub parallelism: Option<usize>,
    pub allow: Option<Vec<String>>,
    pub unsafe_seed: Option<u64>,
    pub allow_unsafe_seed: Option<bool>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The file at `path`, or defaults when no file is given.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }
}

/// The flag value if set, else the config value.
pub fn pick<T>(flag: Option<T>, config: &Option<T>) -> Option<T>
where
    T: Clone,
{
    flag.or_else(|| config.clone())
}

/// Like [`pick`] but the value must come from somewhere.
pub fn require<T: Clone>(flag: Option<T>, config: &Option<T>, name: &str) -> Result<T, CliError> {
    pick(flag, config).ok_or_else(|| CliError::Usage(format!("--{name} is required (flag or config key)")))
}
