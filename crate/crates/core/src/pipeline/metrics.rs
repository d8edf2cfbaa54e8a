use serde::{Deserialize, Serialize};

use super::{PipelineSession, Stage, StageRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageMetrics {
    pub stage: Stage,
    pub calls: u64,
    pub input_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsSnapshot {
    pub total_input_tokens: u64,
    pub total_completion_tokens: u64,
    pub total_latency_ms: u64,
    /// One entry per stage, in order of first appearance in the ledger.
    pub per_stage: Vec<StageMetrics>,
}

impl MetricsSnapshot {
    pub fn from_records(records: &[StageRecord]) -> Self {
        let mut m = MetricsSnapshot::default();
        for r in records {
            m.total_input_tokens += r.usage.input_tokens;
            m.total_completion_tokens += r.usage.completion_tokens;
            m.total_latency_ms += r.latency_ms;
            let entry = match m.per_stage.iter_mut().position(|e| e.stage == r.stage) {
                Some(i) => &mut m.per_stage[i],
                None => {
                    m.per_stage.push(StageMetrics {
                        stage: r.stage,
                        calls: 0,
                        input_tokens: 0,
                        completion_tokens: 0,
                        latency_ms: 0,
                    });
                    m.per_stage.last_mut().expect("just pushed")
                }
            };
            entry.calls += 1;
            entry.input_tokens += r.usage.input_tokens;
            entry.completion_tokens += r.usage.completion_tokens;
            entry.latency_ms += r.latency_ms;
        }
        m
    }
}

pub fn metrics_snapshot(s: &PipelineSession) -> MetricsSnapshot {
    MetricsSnapshot::from_records(&s.ledger)
}
