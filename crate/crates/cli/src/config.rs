//! Configuration file and flag merging.

use std::path::{Path, PathBuf};

use planexplain_core::api::BackendChoice;
use planexplain_core::refine::RemoteConfig;
use planexplain_core::Specificity;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_MODEL: &str = "gpt-oss:20b";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub data_dir: Option<PathBuf>,
    pub backend: Option<BackendChoice>,
    pub remote: Option<RemoteSection>,
    pub alpha: Option<f64>,
    pub specificity: Option<Specificity>,
    pub mu0: Option<f64>,
    pub seed: Option<u64>,
    /// Base URL of a running service; unset runs one in-process.
    pub server: Option<String>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<CliConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: CliConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::usage(format!("config {}: {}: {}", path.display(), e.path(), e.inner())))?;
        if let Some(a) = cfg.alpha {
            check_alpha(a).map_err(|e| CliError::usage(format!("config {}: alpha: {e}", path.display())))?;
        }
        Ok(cfg)
    }
}

pub fn check_alpha(a: f64) -> Result<f64, String> {
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie strictly between 0 and 1, got {a}"))
    }
}

pub fn parse_alpha(s: &str) -> Result<f64, String> {
    check_alpha(s.parse::<f64>().map_err(|e| e.to_string())?)
}

pub fn parse_specificity(s: &str) -> Result<Specificity, String> {
    let n: u8 = s.parse().map_err(|_| format!("specificity must be 1, 2 or 3, got `{s}`"))?;
    Specificity::new(n).map_err(|e| e.to_string())
}

/// Builds the chat endpoint settings, reading the token from the named
/// variable. A named but unset variable is an error.
pub fn remote_config(section: &RemoteSection) -> Result<RemoteConfig, CliError> {
    let base_url = section
        .base_url
        .clone()
        .ok_or_else(|| CliError::usage("the remote backend needs a base URL (--remote-url or remote.base_url)"))?;
    let model = section.model.clone().unwrap_or_else(|| DEFAULT_MODEL.to_string());
    let mut cfg = RemoteConfig::new(base_url, model);
    if let Some(var) = &section.token_env {
        match std::env::var(var) {
            Ok(token) if !token.is_empty() => cfg.token = Some(token),
            _ => {
                return Err(CliError::usage(format!(
                    "environment variable {var} (remote token) is not set"
                )))
            }
        }
    }
    Ok(cfg)
}
