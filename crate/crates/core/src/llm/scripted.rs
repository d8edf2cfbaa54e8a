use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use super::*;

/// Produces a reply for a request; the programmable half of [`ScriptedBackend`].
pub trait Responder: Send + Sync {
    fn respond(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;
}

impl<F> Responder for F
where
    F: Fn(&CompletionRequest) -> Result<BackendReply, BackendError> + Send + Sync,
{
    fn respond(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        self(request)
    }
}

/// A backend driven by a [`Responder`], counting calls per prompt key.
pub struct ScriptedBackend<R> {
    responder: R,
    counts: Mutex<BTreeMap<Option<PromptKey>, usize>>,
}

impl<R: Responder> ScriptedBackend<R> {
    pub fn new(responder: R) -> Self {
        ScriptedBackend { responder, counts: Mutex::default() }
    }

    pub fn responder(&self) -> &R {
        &self.responder
    }

    pub fn count(&self, key: PromptKey) -> usize {
        self.counts.lock().expect("count lock").get(&Some(key)).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.counts.lock().expect("count lock").values().sum()
    }
}

impl<R: Responder> ChatBackend for ScriptedBackend<R> {
    fn name(&self) -> &str {
        "scripted"
    }

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        *self.counts.lock().expect("count lock").entry(request.prompt.as_ref().map(|p| p.key)).or_default() += 1;
        self.responder.respond(request)
    }
}

/// Replies from per-key queues of canned contents, in order.
#[derive(Default)]
pub struct KeyedQueue {
    queues: Mutex<BTreeMap<PromptKey, VecDeque<String>>>,
}

impl KeyedQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, key: PromptKey, content: impl Into<String>) -> &Self {
        self.queues.lock().expect("queue lock").entry(key).or_default().push_back(content.into());
        self
    }

    pub fn remaining(&self, key: PromptKey) -> usize {
        self.queues.lock().expect("queue lock").get(&key).map_or(0, VecDeque::len)
    }
}

impl Responder for KeyedQueue {
    fn respond(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let key = request.prompt.as_ref().map(|p| p.key).ok_or_else(|| BackendError::Permanent("no prompt key".into()))?;
        let content = self
            .queues
            .lock()
            .expect("queue lock")
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::Permanent(format!("script has no reply left for {key}")))?;
        Ok(BackendReply::text(content))
    }
}
