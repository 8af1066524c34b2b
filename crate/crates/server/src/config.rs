use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use skyfed_core::archive_node::Tier;
use skyfed_core::query::ExecLimits;
use skyfed_core::workspace::{DEFAULT_QUOTA_BYTES, MAX_DOUBLINGS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierLimits {
    pub elapsed_s: f64,
    pub row_cap: u64,
}

impl TierLimits {
    pub fn limits(self) -> ExecLimits {
        ExecLimits { elapsed: Duration::from_secs_f64(self.elapsed_s.max(0.0)), row_cap: self.row_cap }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub public: Option<TierLimits>,
    pub collaboration: Option<TierLimits>,
}

impl LimitsConfig {
    pub fn get(&self, tier: Tier) -> ExecLimits {
        let over = match tier {
            Tier::Public => self.public,
            Tier::Collaboration => self.collaboration,
        };
        over.map_or_else(|| tier.limits(), TierLimits::limits)
    }
}

/// An archive node: one catalog store served over HTTP.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    #[serde(default = "default_node_bind")]
    pub bind: String,
    /// Catalog store directory holding the published editions.
    pub store: PathBuf,
    #[serde(default)]
    pub limits: LimitsConfig,
    /// User name to shared secret, for the collaboration tier and reloads.
    #[serde(default)]
    pub users: BTreeMap<String, String>,
}

fn default_node_bind() -> String {
    "127.0.0.1:8081".into()
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<NodeConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<NodeConfig, ConfigError> {
        NodeConfig::from_toml(&read(path)?)
    }
}

/// The federation portal: registry, cross-match, jobs and workspaces.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortalConfig {
    #[serde(default = "default_portal_bind")]
    pub bind: String,
    /// Holds the registry journal, the job journal and results, and the
    /// personal databases.
    pub state_dir: PathBuf,
    #[serde(default = "default_quota")]
    pub mydb_quota_bytes: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_doublings")]
    pub max_doublings: u32,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub users: BTreeMap<String, String>,
    /// Credentials the portal presents to archive nodes.
    pub node_user: Option<String>,
    pub node_secret: Option<String>,
}

fn default_portal_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_quota() -> u64 {
    DEFAULT_QUOTA_BYTES
}

fn default_workers() -> usize {
    2
}

fn default_doublings() -> u32 {
    MAX_DOUBLINGS
}

impl PortalConfig {
    pub fn new(state_dir: impl Into<PathBuf>) -> PortalConfig {
        PortalConfig {
            bind: default_portal_bind(),
            state_dir: state_dir.into(),
            mydb_quota_bytes: default_quota(),
            workers: default_workers(),
            max_doublings: default_doublings(),
            limits: LimitsConfig::default(),
            users: BTreeMap::new(),
            node_user: None,
            node_secret: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<PortalConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<PortalConfig, ConfigError> {
        PortalConfig::from_toml(&read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_config_defaults_and_overrides() {
        let c = NodeConfig::from_toml(
            "store = \"/data/sdss\"\n[limits.public]\nelapsed_s = 5\nrow_cap = 10\n[users]\nalice = \"pw\"\n",
        )
        .unwrap();
        assert_eq!(c.bind, "127.0.0.1:8081");
        assert_eq!(c.limits.get(Tier::Public), ExecLimits { elapsed: Duration::from_secs(5), row_cap: 10 });
        assert_eq!(c.limits.get(Tier::Collaboration), Tier::Collaboration.limits());
        assert_eq!(c.users["alice"], "pw");
        assert!(NodeConfig::from_toml("store = \"x\"\nport = 1\n").is_err());
    }

    #[test]
    fn portal_config_defaults() {
        let c = PortalConfig::from_toml("state_dir = \"/tmp/p\"\n").unwrap();
        assert_eq!(c, PortalConfig::new("/tmp/p"));
        assert_eq!(c.mydb_quota_bytes, 64 * 1024 * 1024);
    }
}
