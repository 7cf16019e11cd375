//! A planner backed by an HTTP chat-completions endpoint.
//!
//! The request carries the environment description and schema as the system
//! message, the rendered memory as the user message, and asks for a
//! schema-constrained JSON reply. A reply that fails to parse is retried
//! with the parse error appended to the conversation.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::schema::parse_response;

use super::{Decision, DecisionRequest, PlannerBackend, PolicyError};

/// Environment variable holding the endpoint key. Keys are never read from
/// flags or configuration files.
pub const API_KEY_ENV: &str = "CRAFTER_COOP_API_KEY";

/// Replies requested per decision before giving up.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            timeout_secs: 60,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .finish()
    }
}

impl RemoteBackend {
    /// Build a backend, reading the key from [`API_KEY_ENV`] if present.
    pub fn new(config: RemoteConfig) -> Result<Self, PolicyError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Result<Self, PolicyError> {
        if config.endpoint.is_empty() {
            return Err(PolicyError::Config("endpoint is empty".to_string()));
        }
        if !config.temperature.is_finite() || config.temperature < 0.0 {
            return Err(PolicyError::Config(format!("temperature {} is invalid", config.temperature)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| PolicyError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_body(&self, messages: &[Value], schema: &Value) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
            "response_format": {
                "type": "json_schema",
                "json_schema": { "name": "response_event", "strict": true, "schema": schema }
            }
        })
    }

    fn send(&self, body: &Value) -> Result<String, PolicyError> {
        let mut request = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| PolicyError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| PolicyError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(PolicyError::Transport(format!("endpoint returned {status}: {}", truncate(&text))));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| PolicyError::Transport(format!("reply is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| PolicyError::Transport("reply has no choices[0].message.content".to_string()))
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl PlannerBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, PolicyError> {
        let schema: Value = serde_json::from_str(&request.bundle.schema)
            .map_err(|e| PolicyError::Config(format!("schema document is not JSON: {e}")))?;
        let mut messages = vec![
            json!({ "role": "system", "content": request.bundle.system_text() }),
            json!({ "role": "user", "content": request.bundle.user_text() }),
        ];
        let mut last_error = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            let content = self.send(&self.request_body(&messages, &schema))?;
            match parse_response(&content) {
                Ok(parsed) => {
                    for w in &parsed.warnings {
                        log::debug!("agent {}: {w}", request.observation.agent);
                    }
                    return Ok(Decision {
                        event: parsed.event,
                        retries: attempt,
                    });
                }
                Err(e) => {
                    last_error = e.to_string();
                    log::info!("agent {}: reply rejected: {last_error}", request.observation.agent);
                    messages.push(json!({ "role": "assistant", "content": content }));
                    messages.push(json!({
                        "role": "user",
                        "content": format!("That reply was rejected: {last_error}. Send a corrected JSON object.")
                    }));
                }
            }
        }
        Err(PolicyError::Exhausted {
            attempts: MAX_ATTEMPTS,
            last_error,
        })
    }
}
