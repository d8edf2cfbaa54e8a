//! The layered synthesis session.
//!
//! A [`PipelineSession`] moves through the [`Stage`] graph one operation at a
//! time. Layers that need the language model (screening, skeleton, summary,
//! experts, parameter experts, questions, modification) run inside
//! [`Pipeline`] operations; the human checkpoints (screening decision,
//! skeleton feedback, missing-parameter answers, final edits) are separate
//! operations so a UI, a terminal or a script can supply them.
//!
//! [`advance`] runs every automatic layer until the session reaches a
//! checkpoint or a terminal stage; [`run_unattended`] also answers the
//! checkpoints from a [`Script`].

mod driver;
mod engine;
mod experts;
mod metrics;
mod store;

pub use driver::{advance, run_unattended, Script};
pub use engine::{Answer, FeedbackDecision, FeedbackOutcome, Pipeline, ScreeningDecision, ScreeningOutcome};
pub use experts::{needs_details, needs_parameters, step_number};
pub use metrics::{metrics_snapshot, MetricsSnapshot, StageMetrics};
pub use store::{FileSessionStore, MemorySessionStore, SessionStore, StoreError};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ir::Workflow;
use crate::llm::{LlmError, TokenUsage, DEFAULT_MODEL};
use crate::prompts::{PromptError, PromptKey};
use crate::validate::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Created,
    Screening,
    AwaitScreeningDecision,
    SkeletonBuilt,
    AwaitFeedback,
    DetailsFilled,
    ParametersFilled,
    AwaitAnswers,
    Finalized,
    Failed,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Created,
        Stage::Screening,
        Stage::AwaitScreeningDecision,
        Stage::SkeletonBuilt,
        Stage::AwaitFeedback,
        Stage::DetailsFilled,
        Stage::ParametersFilled,
        Stage::AwaitAnswers,
        Stage::Finalized,
        Stage::Failed,
    ];

    /// Whether the stage graph has an edge `self -> next`.
    pub fn can_transition_to(self, next: Stage) -> bool {
        use Stage::*;
        if next == Failed {
            return !matches!(self, Finalized | Failed);
        }
        matches!(
            (self, next),
            (Created, Screening | SkeletonBuilt | Finalized)
                | (Screening, AwaitScreeningDecision | SkeletonBuilt)
                | (AwaitScreeningDecision, SkeletonBuilt)
                | (SkeletonBuilt, AwaitFeedback | DetailsFilled)
                | (AwaitFeedback, SkeletonBuilt | DetailsFilled)
                | (DetailsFilled, ParametersFilled)
                | (ParametersFilled, AwaitAnswers | Finalized)
                | (AwaitAnswers, Finalized)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Finalized | Stage::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Created => "Created",
            Stage::Screening => "Screening",
            Stage::AwaitScreeningDecision => "AwaitScreeningDecision",
            Stage::SkeletonBuilt => "SkeletonBuilt",
            Stage::AwaitFeedback => "AwaitFeedback",
            Stage::DetailsFilled => "DetailsFilled",
            Stage::ParametersFilled => "ParametersFilled",
            Stage::AwaitAnswers => "AwaitAnswers",
            Stage::Finalized => "Finalized",
            Stage::Failed => "Failed",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PipelineConfig {
    /// Request screening before the skeleton is built.
    pub enable_screening: bool,
    /// Summary review of the skeleton with edit rounds.
    pub enable_feedback_loop: bool,
    pub max_feedback_loops: u32,
    /// One comprehensive prompt instead of the layered pipeline.
    pub single_prompt_baseline: bool,
    pub model: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::full()
    }
}

impl PipelineConfig {
    fn layered(enable_screening: bool, enable_feedback_loop: bool) -> Self {
        PipelineConfig {
            enable_screening,
            enable_feedback_loop,
            max_feedback_loops: 2,
            single_prompt_baseline: false,
            model: DEFAULT_MODEL.to_string(),
        }
    }

    pub fn full() -> Self {
        Self::layered(true, true)
    }

    /// No user aid: neither screening nor feedback.
    pub fn nua() -> Self {
        Self::layered(false, false)
    }

    /// Screening only.
    pub fn gc() -> Self {
        Self::layered(true, false)
    }

    /// Feedback loop only.
    pub fn hfl() -> Self {
        Self::layered(false, true)
    }

    pub fn baseline(model: impl Into<String>) -> Self {
        PipelineConfig {
            enable_screening: false,
            enable_feedback_loop: false,
            max_feedback_loops: 0,
            single_prompt_baseline: true,
            model: model.into(),
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.single_prompt_baseline && (self.enable_screening || self.enable_feedback_loop) {
            return Err(PipelineError::Validation(
                "the single-prompt baseline cannot be combined with screening or the feedback loop".into(),
            ));
        }
        if self.model.trim().is_empty() {
            return Err(PipelineError::Validation("model name must not be empty".into()));
        }
        Ok(())
    }

    /// The feedback loop runs only when enabled and allowed at least one round.
    pub fn feedback_active(&self) -> bool {
        self.enable_feedback_loop && self.max_feedback_loops > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Question {
    pub step_id: String,
    pub parameter: String,
    pub text: String,
}

/// One language-model call made on behalf of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    /// The stage the call was made to reach.
    pub stage: Stage,
    pub prompt_key: PromptKey,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineSession {
    pub session_id: String,
    pub request: String,
    /// The request as first submitted, kept when screening leads to a rewrite.
    pub original_request: String,
    pub stage: Stage,
    /// Every stage the session has been in, in order.
    pub history: Vec<Stage>,
    #[serde(with = "opt_workflow")]
    pub skeleton: Option<Workflow>,
    #[serde(with = "opt_workflow")]
    pub workflow: Option<Workflow>,
    pub follow_ups: Vec<String>,
    pub screening_resolved: bool,
    pub summary: Option<String>,
    pub feedback_approved: bool,
    pub feedback_rounds: u32,
    pub pending_questions: Vec<Question>,
    pub config: PipelineConfig,
    pub ledger: Vec<StageRecord>,
    /// Findings attached during synthesis (expert failures) and, once
    /// finalized, the validator's report.
    pub diagnostics: Vec<Diagnostic>,
    pub last_error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl PipelineSession {
    pub(crate) fn set_stage(&mut self, next: Stage) {
        assert!(self.stage.can_transition_to(next), "illegal stage transition {} -> {next}", self.stage);
        self.stage = next;
        self.history.push(next);
        self.touch();
    }

    pub(crate) fn touch(&mut self) {
        self.updated_at = Utc::now();
    }

    pub fn total_usage(&self) -> TokenUsage {
        self.ledger.iter().fold(TokenUsage::default(), |acc, r| acc + r.usage)
    }

    /// The most complete workflow the session holds.
    pub fn current_workflow(&self) -> Option<&Workflow> {
        self.workflow.as_ref().or(self.skeleton.as_ref())
    }
}

mod opt_workflow {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    use crate::ir::parse::workflow_from_value;
    use crate::ir::Workflow;

    pub fn serialize<S: Serializer>(w: &Option<Workflow>, s: S) -> Result<S::Ok, S::Error> {
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Workflow>, D::Error> {
        match Option::<Value>::deserialize(d)? {
            None => Ok(None),
            Some(v) => workflow_from_value(&v).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{operation} is not allowed in stage {stage}")]
    InvalidStage { operation: &'static str, stage: Stage },
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("could not build a workflow skeleton: {0}")]
    SkeletonParse(String),
    #[error("could not apply the modification: {0}")]
    ModificationParse(String),
    #[error("no pending question for parameter `{parameter}` of {step_id}")]
    UnknownQuestion { step_id: String, parameter: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl PipelineError {
    /// Stable machine code, used by the service and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Validation(_) => "validation",
            PipelineError::InvalidStage { .. } => "invalid-stage",
            PipelineError::Backend(_) => "backend-unavailable",
            PipelineError::SkeletonParse(_) => "skeleton-parse",
            PipelineError::ModificationParse(_) => "modification-parse",
            PipelineError::UnknownQuestion { .. } => "unknown-question",
            PipelineError::Prompt(_) => "prompt",
            PipelineError::Store(_) => "store",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_graph_edges() {
        use Stage::*;
        let allowed: Vec<(Stage, Stage)> = Stage::ALL
            .iter()
            .flat_map(|&a| Stage::ALL.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        // 14 forward edges plus an edge to Failed from each of the 8 live stages.
        assert_eq!(allowed.len(), 22);
        assert!(!Finalized.can_transition_to(Failed));
        assert!(!DetailsFilled.can_transition_to(SkeletonBuilt));
        assert!(!Created.can_transition_to(AwaitFeedback));
    }

    #[test]
    fn config_flags() {
        assert!(PipelineConfig::full().check().is_ok());
        assert!(PipelineConfig::baseline("m").check().is_ok());
        let mut bad = PipelineConfig::baseline("m");
        bad.enable_screening = true;
        assert!(bad.check().is_err());
        let mut zero = PipelineConfig::full();
        zero.max_feedback_loops = 0;
        assert!(!zero.feedback_active());
    }
}
