use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::batch::{BatchSettings, RetryPolicy};

/// Environment variable holding the bearer token unless the config names another one.
pub const DEFAULT_API_KEY_ENV: &str = "VOC_API_KEY";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
    #[error("endpoint url {0:?} must start with http:// or https://")]
    BadEndpoint(String),
    #[error("model name must not be empty")]
    NoModel,
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("decoding parameter {0:?} is reserved")]
    ReservedParam(String),
    #[error("{0}")]
    Prompt(#[from] voc_core::prompt::PromptError),
    #[error("could not build http client: {0}")]
    Client(String),
}

fn default_in_flight() -> usize {
    8
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_base() -> u64 {
    250
}
fn default_backoff_max() -> u64 {
    8_000
}
fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}

/// Temperature 0 and a single completion: extraction is treated as deterministic.
pub fn default_decoding() -> BTreeMap<String, serde_json::Value> {
    BTreeMap::from([("temperature".into(), 0.into()), ("n".into(), 1.into())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub backoff_max_ms: u64,
    /// Extra request fields such as `temperature` or `max_tokens`.
    #[serde(default = "default_decoding")]
    pub decoding: BTreeMap<String, serde_json::Value>,
    /// Name of the environment variable with the bearer token. Tokens never live in config.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

impl BackendConfig {
    pub fn new(endpoint_url: &str, model_name: &str) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_base(),
            backoff_max_ms: default_backoff_max(),
            decoding: default_decoding(),
            api_key_env: default_key_env(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_in_flight == 0 {
            return Err(ConfigError::ZeroInFlight);
        }
        if !(self.endpoint_url.starts_with("http://") || self.endpoint_url.starts_with("https://")) {
            return Err(ConfigError::BadEndpoint(self.endpoint_url.clone()));
        }
        if self.model_name.trim().is_empty() {
            return Err(ConfigError::NoModel);
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ConfigError::ZeroTimeout);
        }
        if let Some(key) = self.decoding.keys().find(|k| *k == "model" || *k == "messages") {
            return Err(ConfigError::ReservedParam(key.clone()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn batch_settings(&self) -> BatchSettings {
        BatchSettings {
            max_in_flight: self.max_in_flight,
            retry: RetryPolicy {
                max_retries: self.max_retries,
                base_delay: Duration::from_millis(self.backoff_base_ms),
                max_delay: Duration::from_millis(self.backoff_max_ms),
            },
        }
    }
}
