use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Message, Role};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("replay script exhausted")]
    Exhausted,
}

#[async_trait]
pub trait ModelProvider: Send + Sync {
    async fn complete(&self, system_prompt: &str, history: &[Message]) -> Result<String, ProviderError>;
}

/// Canned responses consumed strictly in order. Every system prompt it
/// receives is kept for inspection.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    responses: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ReplayProvider {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("replay lock").len()
    }

    pub fn system_prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("replay lock").clone()
    }
}

#[async_trait]
impl ModelProvider for ReplayProvider {
    async fn complete(&self, system_prompt: &str, _history: &[Message]) -> Result<String, ProviderError> {
        self.prompts.lock().expect("replay lock").push(system_prompt.to_string());
        self.responses.lock().expect("replay lock").pop_front().ok_or(ProviderError::Exhausted)
    }
}

/// A scripted conversation: each turn is a user message plus the canned
/// model responses that turn consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub turns: Vec<ReplayTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayTurn {
    pub user: String,
    pub responses: Vec<String>,
}

impl ReplayScript {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn provider(&self) -> ReplayProvider {
        ReplayProvider::new(self.turns.iter().flat_map(|t| t.responses.iter().cloned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpProviderConfig {
    /// Base URL of an OpenAI-compatible API; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub temperature: f64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: "BLOCLAW_API_KEY".into(),
            timeout_secs: 120.0,
            temperature: 0.2,
        }
    }
}

/// Chat-completions client. Observations are sent as user messages with
/// an `[observation]` prefix since the wire format has no such role.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(1.0)))
            .build()
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn request_body(&self, system_prompt: &str, history: &[Message]) -> serde_json::Value {
        let mut messages = vec![json!({ "role": "system", "content": system_prompt })];
        for message in history {
            let (role, content) = match message.role {
                Role::User => ("user", message.text.clone()),
                Role::Assistant => ("assistant", message.text.clone()),
                Role::Observation => ("user", format!("[observation]\n{}", message.text)),
            };
            messages.push(json!({ "role": role, "content": content }));
        }
        json!({ "model": self.config.model, "messages": messages, "temperature": self.config.temperature })
    }
}

#[async_trait]
impl ModelProvider for HttpProvider {
    async fn complete(&self, system_prompt: &str, history: &[Message]) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut request = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(self.request_body(system_prompt, history).to_string());
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response.text().await.map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(200).collect();
            return Err(ProviderError::Unreachable(format!("status {status}: {excerpt}")));
        }
        let body: serde_json::Value = serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("no choices[0].message.content".into()))
    }
}
