use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use skyfed_core::archive_node::Tier;
use skyfed_core::federation::validate_endpoint;
use skyfed_server::client::Credentials;

use crate::CliError;

pub const CONFIG_ENV: &str = "SKYFED_CONFIG";

/// The configuration file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub portal: Option<String>,
    pub user: Option<String>,
    pub secret: Option<String>,
    pub tier: Option<String>,
    /// Archive used by `cone` and `cutout` when none is named.
    pub default_archive: Option<String>,
    /// Archive name to node endpoint, for talking to nodes directly.
    #[serde(default)]
    pub archives: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub portal: Option<String>,
    pub user: Option<String>,
    pub secret: Option<String>,
    pub tier: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub portal: Option<String>,
    pub credentials: Option<Credentials>,
    pub tier: Tier,
    pub default_archive: Option<String>,
    pub archives: BTreeMap<String, String>,
}

/// Resolves settings with flag over environment over file precedence.
/// `env` looks up environment variables.
pub fn resolve(flags: &Overrides, env: &dyn Fn(&str) -> Option<String>) -> Result<CliConfig, CliError> {
    let path = flags.config.clone().or_else(|| env(CONFIG_ENV).map(PathBuf::from));
    let file = match path {
        Some(p) => FileConfig::load(&p)?,
        None => FileConfig::default(),
    };
    let pick = |flag: &Option<String>, var: &str, file: &Option<String>| {
        flag.clone().or_else(|| env(var)).or_else(|| file.clone())
    };
    let portal = pick(&flags.portal, "SKYFED_PORTAL", &file.portal);
    let user = pick(&flags.user, "SKYFED_USER", &file.user);
    let secret = pick(&flags.secret, "SKYFED_SECRET", &file.secret);
    let tier = pick(&flags.tier, "SKYFED_TIER", &file.tier);
    let tier = match tier.as_deref() {
        None => Tier::Public,
        Some(t) => Tier::parse(t).ok_or_else(|| CliError::Usage(format!("unknown tier {t}")))?,
    };
    for url in portal.iter().chain(file.archives.values()) {
        validate_endpoint(url).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let credentials = match (user, secret) {
        (Some(u), Some(s)) => Some(Credentials::new(&u, &s)),
        (None, None) => None,
        _ => return Err(CliError::Usage("user and secret must be given together".into())),
    };
    Ok(CliConfig { portal, credentials, tier, default_archive: file.default_archive, archives: file.archives })
}
