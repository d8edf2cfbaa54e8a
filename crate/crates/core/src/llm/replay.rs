use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::*;
use crate::unique_map::UniqueMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReplayEntry {
    pub content: String,
    pub input_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl ReplayEntry {
    pub fn usage(&self) -> TokenUsage {
        TokenUsage { input_tokens: self.input_tokens, completion_tokens: self.completion_tokens }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed replay store: {message}")]
    Format { path: String, message: String },
}

/// Recorded completions keyed by prompt fingerprint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStore {
    pub entries: BTreeMap<String, ReplayEntry>,
}

pub fn load_replay(path: &Path) -> Result<ReplayStore, ReplayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ReplayError::Io { path: path.display().to_string(), source })?;
    ReplayStore::from_json(&text)
        .map_err(|message| ReplayError::Format { path: path.display().to_string(), message })
}

impl ReplayStore {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let map: UniqueMap<ReplayEntry> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Ok(ReplayStore { entries: map.0 })
    }

    /// Builds a store from completed calls. Calls without a fingerprint cannot
    /// be replayed and are skipped; a repeated fingerprint keeps its first
    /// completion, which is what a replay would return anyway.
    pub fn from_calls(calls: &[CallRecord]) -> Self {
        let mut entries = BTreeMap::new();
        for call in calls {
            let Some(fp) = &call.fingerprint else { continue };
            entries.entry(fp.clone()).or_insert_with(|| ReplayEntry {
                content: call.result.content.clone(),
                input_tokens: call.result.usage.input_tokens,
                completion_tokens: call.result.usage.completion_tokens,
                latency_ms: call.result.latency_ms,
            });
        }
        ReplayStore { entries }
    }

    pub fn to_json(&self) -> String {
        if self.entries.is_empty() {
            return "{}\n".to_string();
        }
        let mut out = serde_json::to_string_pretty(&self.entries).expect("replay serialization is infallible");
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ReplayError> {
        std::fs::write(path, self.to_json()).map_err(|source| ReplayError::Io { path: path.display().to_string(), source })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&ReplayEntry> {
        self.entries.get(fingerprint)
    }

    pub fn total_usage(&self) -> TokenUsage {
        self.entries.values().fold(TokenUsage::default(), |acc, e| acc + e.usage())
    }

    /// Adds the entries of `other`, keeping existing entries on conflict.
    pub fn merge(&mut self, other: ReplayStore) {
        for (k, v) in other.entries {
            self.entries.entry(k).or_insert(v);
        }
    }
}

/// Serves recorded completions; never contacts a network.
pub struct ReplayBackend {
    store: ReplayStore,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        ReplayBackend { store }
    }

    pub fn from_file(path: &Path) -> Result<Self, ReplayError> {
        Ok(ReplayBackend::new(load_replay(path)?))
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl ChatBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let fp = request
            .fingerprint()
            .ok_or_else(|| BackendError::Permanent("request carries no prompt fingerprint to replay".into()))?;
        let entry = self
            .store
            .get(fp)
            .ok_or_else(|| BackendError::Permanent(format!("no recorded completion for fingerprint {fp}")))?;
        Ok(BackendReply { content: entry.content.clone(), usage: Some(entry.usage()), latency_ms: Some(entry.latency_ms) })
    }
}
