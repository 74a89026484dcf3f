use std::collections::HashMap;
use std::fs;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use pausepoint_core::platform::Role;
use serde::Deserialize;

use crate::ServeError;

/// Flat key/value configuration read from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: IpAddr,
    pub data_dir: PathBuf,
    /// JSON file mapping bearer tokens to principals.
    #[serde(default)]
    pub auth_tokens: Option<PathBuf>,
    /// Default for exercises that do not set gallery access themselves.
    #[serde(default)]
    pub student_gallery_access: bool,
    /// Budget for request bodies being received at once, in bytes.
    #[serde(default = "default_inflight")]
    pub max_inflight_upload_bytes: u64,
    /// How long shutdown waits for in-flight requests before dropping them.
    #[serde(default = "default_grace")]
    pub shutdown_grace_secs: u64,
}

fn default_port() -> u16 {
    8080
}

fn default_bind() -> IpAddr {
    IpAddr::V4(Ipv4Addr::LOCALHOST)
}

fn default_inflight() -> u64 {
    1 << 30
}

fn default_grace() -> u64 {
    10
}

/// One entry of the token file.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            port: default_port(),
            bind: default_bind(),
            data_dir: data_dir.into(),
            auth_tokens: None,
            student_gallery_access: false,
            max_inflight_upload_bytes: default_inflight(),
            shutdown_grace_secs: default_grace(),
        }
    }

    /// Parse a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ServeError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ServeError::BadConfig(format!("{}: {e}", path.display())))?;
        let mut config: ServiceConfig =
            toml::from_str(&text).map_err(|e| ServeError::BadConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if let Some(tokens) = &config.auth_tokens {
            if tokens.is_relative() {
                config.auth_tokens = Some(base.join(tokens));
            }
        }
        Ok(config)
    }

    /// The data directory must already exist.
    pub fn check(&self) -> Result<(), ServeError> {
        if !self.data_dir.is_dir() {
            return Err(ServeError::BadConfig(format!(
                "data_dir {} does not exist",
                self.data_dir.display()
            )));
        }
        Ok(())
    }

    pub fn tokens(&self) -> Result<HashMap<String, TokenEntry>, ServeError> {
        let Some(path) = &self.auth_tokens else {
            return Ok(HashMap::new());
        };
        let bytes = fs::read(path).map_err(|e| ServeError::BadConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| ServeError::BadConfig(format!("{}: {e}", path.display())))
    }
}
