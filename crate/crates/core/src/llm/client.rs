use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::ZERO }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Approximate token count: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

/// One completed backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallRecord {
    pub prompt_key: Option<PromptKey>,
    pub fingerprint: Option<String>,
    pub result: CompletionResult,
}

/// Append-only, thread-safe log of completed calls.
#[derive(Debug, Default)]
pub struct CallLog {
    records: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn push(&self, record: CallRecord) {
        self.records.lock().expect("call log lock").push(record);
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.records.lock().expect("call log lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("call log lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_usage(&self) -> TokenUsage {
        self.records.lock().expect("call log lock").iter().fold(TokenUsage::default(), |acc, r| acc + r.result.usage)
    }
}

#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    model: String,
    log: Arc<CallLog>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmClient { backend, retry: RetryPolicy::default(), model: DEFAULT_MODEL.to_string(), log: Arc::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn log(&self) -> &Arc<CallLog> {
        &self.log
    }

    /// One completion, retrying transient failures with exponential backoff.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.check()?;
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt - 1));
            }
            let started = Instant::now();
            match self.backend.send(request) {
                Ok(reply) => return self.finish(request, reply, started.elapsed()),
                Err(BackendError::Transient(m)) => {
                    tracing::warn!(backend = self.backend.name(), attempt, "transient backend error: {m}");
                    last = m;
                }
                Err(BackendError::Permanent(m)) => {
                    return Err(LlmError::BackendUnavailable { backend: self.backend.name().to_string(), message: m })
                }
            }
        }
        Err(LlmError::BackendUnavailable {
            backend: self.backend.name().to_string(),
            message: format!("gave up after {} attempts: {last}", self.retry.attempts.max(1)),
        })
    }

    fn finish(
        &self,
        request: &CompletionRequest,
        reply: BackendReply,
        elapsed: Duration,
    ) -> Result<CompletionResult, LlmError> {
        let (usage, usage_estimated) = match reply.usage {
            Some(u) => (u, false),
            None => {
                let input: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
                (TokenUsage { input_tokens: input, completion_tokens: estimate_tokens(&reply.content) }, true)
            }
        };
        let result = CompletionResult {
            content: reply.content,
            usage,
            latency_ms: reply.latency_ms.unwrap_or(elapsed.as_millis() as u64),
            backend: self.backend.name().to_string(),
            usage_estimated,
        };
        self.log.push(CallRecord {
            prompt_key: request.prompt.as_ref().map(|p| p.key),
            fingerprint: request.fingerprint().map(str::to_string),
            result: result.clone(),
        });
        if request.response_format == ResponseFormat::JsonObject {
            if let Err(e) = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&result.content) {
                return Err(LlmError::ResponseFormat { result: Box::new(result), message: e.to_string() });
            }
        }
        Ok(result)
    }
}
