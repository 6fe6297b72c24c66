use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::conversation::{ChatMessage, ChatTransport, Role};
use super::prompts::SystemPrompt;
use crate::{Error, Result};

/// A chat-completions endpoint and how to run sessions against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub provider: Option<String>,
    /// Environment variable holding the bearer token. Unset means no auth.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_prompt")]
    pub system_prompt: SystemPrompt,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Concurrent sessions; each session is itself strictly sequential.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn default_prompt() -> SystemPrompt {
    SystemPrompt::LlmHuman
}
fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    1
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(Error::Config("base_url and model_name are required".into()));
        }
        if !(self.request_timeout_s > 0.0) {
            return Err(Error::Config("request_timeout_s must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be >= 1".into()));
        }
        Ok(())
    }
}

/// Blocking chat-completions client with bounded retries on transport
/// failures, 429 and 5xx responses.
pub struct HttpChatClient {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl HttpChatClient {
    pub fn from_config(config: &EndpointConfig) -> Result<Self> {
        config.validate()?;
        let api_key = match &config.api_key_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} holding the API key is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model_name.clone(),
            api_key,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(500),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn request_once(&self, body: &Value) -> std::result::Result<String, (bool, String)> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("HTTP {status}: {text}")));
        }
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("malformed response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, "response has no choices[0].message.content".to_string()))
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl ChatTransport for HttpChatClient {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({
            "model": self.model,
            "messages": messages
                .iter()
                .map(|m| json!({"role": role_name(m.role), "content": m.content}))
                .collect::<Vec<_>>(),
        });
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) if retryable && attempt < self.max_retries => {
                    log::warn!("request to {} failed ({msg}); retrying", self.url);
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err((_, msg)) => {
                    return Err(Error::Transport(format!(
                        "{} after {} attempt(s): {msg}",
                        self.url,
                        attempt + 1
                    )))
                }
            }
        }
    }
}
