use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::*;

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Connection settings, read from `FLOWSMITH_API_KEY`, `FLOWSMITH_BASE_URL`
/// and `FLOWSMITH_MODEL`.
#[derive(Clone)]
pub struct LiveConfig {
    pub api_key: String,
    pub base_url: String,
    pub model: String,
}

impl std::fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveConfig").field("base_url", &self.base_url).field("model", &self.model).finish_non_exhaustive()
    }
}

impl LiveConfig {
    pub fn from_env() -> Result<Self, String> {
        let api_key = std::env::var("FLOWSMITH_API_KEY").map_err(|_| "FLOWSMITH_API_KEY is not set".to_string())?;
        Ok(LiveConfig {
            api_key,
            base_url: std::env::var("FLOWSMITH_BASE_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.to_string()),
            model: std::env::var("FLOWSMITH_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.to_string()),
        })
    }
}

/// Minimal HTTP capability the live backend needs, so tests can substitute it.
pub trait HttpTransport: Send + Sync {
    /// POSTs a JSON body and returns the status code and response text.
    /// `Err` means the request never completed (DNS, connect, timeout).
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<(u16, String), String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build();
        UreqTransport { agent: ureq::Agent::new_with_config(config) }
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<(u16, String), String> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }
}

/// Hosted chat-completions backend (`POST {base}/chat/completions`).
pub struct LiveBackend {
    config: LiveConfig,
    transport: Arc<dyn HttpTransport>,
}

impl LiveBackend {
    pub fn new(config: LiveConfig, transport: Arc<dyn HttpTransport>) -> Self {
        LiveBackend { config, transport }
    }

    pub fn from_env() -> Result<Self, String> {
        Ok(LiveBackend::new(LiveConfig::from_env()?, Arc::new(UreqTransport::new(Duration::from_secs(120)))))
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let model = if request.model.is_empty() { &self.config.model } else { &request.model };
        let mut body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if request.response_format == ResponseFormat::JsonObject {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

fn parse_reply(text: &str) -> Result<BackendReply, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Permanent(format!("unreadable response: {e}")))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))?
        .to_string();
    let usage = match (v["usage"]["prompt_tokens"].as_u64(), v["usage"]["completion_tokens"].as_u64()) {
        (Some(i), Some(c)) => Some(TokenUsage { input_tokens: i, completion_tokens: c }),
        _ => None,
    };
    Ok(BackendReply { content, usage, latency_ms: None })
}

impl ChatBackend for LiveBackend {
    fn name(&self) -> &str {
        "live"
    }

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let (status, text) =
            self.transport.post_json(&url, &self.config.api_key, &self.body(request)).map_err(BackendError::Transient)?;
        match status {
            200..=299 => parse_reply(&text),
            408 | 409 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => Err(BackendError::Permanent(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
    }
}
