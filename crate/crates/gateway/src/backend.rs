use std::future::Future;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::{BackendConfig, ConfigError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("could not decode backend response: {0}")]
    Decode(String),
}

impl BackendError {
    /// Transient faults worth another attempt: transport failures, timeouts, 408, 429 and 5xx.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout => true,
            BackendError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            BackendError::Decode(_) => false,
        }
    }
}

/// Something that turns a prompt into a raw text response.
pub trait Backend: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> impl Future<Output = Result<String, BackendError>> + Send;
}

/// Chat-completion style HTTP backend: one user message in, first choice's content out.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    config: BackendConfig,
    token: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

const MAX_ERROR_BODY: usize = 512;

impl HttpBackend {
    /// Reads the bearer token from the environment variable named in the config, if set.
    pub fn new(config: BackendConfig) -> Result<Self, ConfigError> {
        let token = std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: BackendConfig, token: Option<String>) -> Result<Self, ConfigError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(HttpBackend { client, config, token })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// The JSON body sent for `prompt`.
    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = Map::new();
        body.insert("model".into(), json!(self.config.model_name));
        body.insert("messages".into(), json!([{ "role": "user", "content": prompt }]));
        for (k, v) in &self.config.decoding {
            body.insert(k.clone(), v.clone());
        }
        Value::Object(body)
    }
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    async fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let mut request = self.client.post(&self.config.endpoint_url).json(&self.request_body(prompt));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let body = response.text().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            let mut body = body;
            if body.len() > MAX_ERROR_BODY {
                let cut = (0..=MAX_ERROR_BODY).rev().find(|i| body.is_char_boundary(*i)).unwrap_or(0);
                body.truncate(cut);
            }
            return Err(BackendError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse = serde_json::from_str(&body).map_err(|e| BackendError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Decode("response has no choices".into()))
            .map(|c| c.message.content.unwrap_or_default())
    }
}
