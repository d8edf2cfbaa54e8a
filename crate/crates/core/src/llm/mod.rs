//! Backend-agnostic chat completion client.
//!
//! [`LlmClient`] wraps a [`ChatBackend`] with bounded retry, token
//! accounting and response-format checking. Backends:
//!
//! - [`LiveBackend`]: the hosted chat-completions HTTP protocol.
//! - [`ReplayBackend`]: canned completions looked up by prompt fingerprint.
//! - [`ScriptedBackend`]: a programmable responder for tests and fixtures.
//!
//! Every completed call is appended to the client's [`CallLog`], from which a
//! replay store can be written ([`ReplayStore::from_calls`]).

mod client;
mod live;
mod replay;
mod scripted;

pub use client::{estimate_tokens, CallLog, CallRecord, LlmClient, RetryPolicy};
pub use live::{HttpTransport, LiveBackend, LiveConfig, UreqTransport};
pub use replay::{load_replay, ReplayBackend, ReplayEntry, ReplayError, ReplayStore};
pub use scripted::{KeyedQueue, Responder, ScriptedBackend};

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::prompts::{PromptInstance, PromptKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ResponseFormat {
    FreeText,
    JsonObject,
}

/// Identifies the rendered prompt a request was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub key: PromptKey,
    pub fingerprint: String,
}

pub const DEFAULT_MODEL: &str = "gpt-4o-mini-2024-07-18";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub response_format: ResponseFormat,
    pub prompt: Option<PromptMeta>,
}

impl CompletionRequest {
    pub fn new(messages: Vec<Message>, model: impl Into<String>) -> Self {
        CompletionRequest {
            messages,
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
            response_format: ResponseFormat::FreeText,
            prompt: None,
        }
    }

    /// A request carrying a rendered prompt, asking for JSON when the layer expects it.
    pub fn from_prompt(prompt: &PromptInstance, model: impl Into<String>) -> Self {
        let mut req = CompletionRequest::new(vec![Message::system(&prompt.system), Message::user(&prompt.user)], model);
        req.response_format = if prompt.key.expects_json() { ResponseFormat::JsonObject } else { ResponseFormat::FreeText };
        req.prompt = Some(PromptMeta { key: prompt.key, fingerprint: prompt.fingerprint.clone() });
        req
    }

    pub fn fingerprint(&self) -> Option<&str> {
        self.prompt.as_ref().map(|p| p.fingerprint.as_str())
    }

    pub fn check(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("messages must not be empty".into())),
            Some(m) if m.role == Role::Assistant => {
                Err(LlmError::InvalidRequest("first message must be a system or user message".into()))
            }
            _ if !(0.0..=2.0).contains(&self.temperature) => {
                Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub completion_tokens: u64,
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, o: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + o.input_tokens,
            completion_tokens: self.completion_tokens + o.completion_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, o: TokenUsage) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletionResult {
    pub content: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub backend: String,
    /// True when `usage` came from the byte-length estimator, not the backend.
    pub usage_estimated: bool,
}

/// What a backend returns for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub content: String,
    pub usage: Option<TokenUsage>,
    pub latency_ms: Option<u64>,
}

impl BackendReply {
    pub fn text(content: impl Into<String>) -> Self {
        BackendReply { content: content.into(), usage: None, latency_ms: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Permanent(String),
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("backend {backend} unavailable: {message}")]
    BackendUnavailable { backend: String, message: String },
    /// JSON was requested but the content does not parse. The completion is
    /// kept so its usage can still be accounted.
    #[error("response is not a JSON object: {message}")]
    ResponseFormat { result: Box<CompletionResult>, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
