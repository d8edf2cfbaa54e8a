use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::experts::{apply_patch, chronological, degrade_to_unknown, merge_reply, needs_details, needs_parameters};
use super::*;
use crate::ir::parse::{steps_from_value, workflow_from_value};
use crate::ir::{canonical_json, serialize_canonical, StepKind, Workflow};
use crate::llm::{CompletionRequest, CompletionResult, LlmClient, Message};
use crate::prompts::{PromptInstance, PromptRegistry};
use crate::validate::{find_missing_essentials, validate_all_with, EssentialCatalog};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome", content = "followUps")]
pub enum ScreeningOutcome {
    Clear,
    FollowUps(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "action", content = "request")]
pub enum ScreeningDecision {
    /// Keep the request as submitted.
    Proceed,
    /// Replace the request with a clarified one. Allowed once, not re-screened.
    Rewrite(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "action", content = "edits")]
pub enum FeedbackDecision {
    Approve,
    Edit(String),
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FeedbackOutcome {
    Approved,
    Revised,
    /// The edit round budget is spent; only approve or abort are accepted.
    LoopLimitReached,
    Aborted,
}

/// An answer to a pending missing-parameter question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Answer {
    pub step_id: String,
    pub parameter: String,
    pub value: String,
}

/// Runs pipeline operations against one language-model client.
///
/// Every operation persists the session to the configured store before
/// returning, whether it succeeded or not.
#[derive(Clone)]
pub struct Pipeline {
    client: LlmClient,
    registry: Arc<PromptRegistry>,
    catalog: Arc<EssentialCatalog>,
    store: Option<Arc<dyn SessionStore>>,
}

type Json = Map<String, Value>;

fn stage_error<T>(operation: &'static str, s: &PipelineSession) -> Result<T, PipelineError> {
    Err(PipelineError::InvalidStage { operation, stage: s.stage })
}

fn non_empty_lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

/// The id to give a generated workflow: the model's UUID when it produced a
/// valid one, otherwise a UUID derived from the request text.
fn workflow_id(candidate: Option<&str>, request: &str) -> String {
    if let Some(id) = candidate.and_then(|c| uuid::Uuid::parse_str(c).ok()) {
        return id.hyphenated().to_string();
    }
    let digest = Sha256::digest(request.as_bytes());
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    uuid::Builder::from_random_bytes(bytes).into_uuid().hyphenated().to_string()
}

impl Pipeline {
    pub fn new(client: LlmClient) -> Self {
        Pipeline {
            client,
            registry: Arc::new(PromptRegistry::builtin().clone()),
            catalog: Arc::new(EssentialCatalog::builtin().clone()),
            store: None,
        }
    }

    pub fn with_registry(mut self, registry: PromptRegistry) -> Self {
        self.registry = Arc::new(registry);
        self
    }

    pub fn with_catalog(mut self, catalog: EssentialCatalog) -> Self {
        self.catalog = Arc::new(catalog);
        self
    }

    pub fn with_store(mut self, store: Arc<dyn SessionStore>) -> Self {
        self.store = Some(store);
        self
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn catalog(&self) -> &EssentialCatalog {
        &self.catalog
    }

    pub fn store(&self) -> Option<&Arc<dyn SessionStore>> {
        self.store.as_ref()
    }

    fn persist<T>(&self, s: &mut PipelineSession, result: Result<T, PipelineError>) -> Result<T, PipelineError> {
        match &result {
            Ok(_) => s.last_error = None,
            Err(
                PipelineError::InvalidStage { .. }
                | PipelineError::Validation(_)
                | PipelineError::UnknownQuestion { .. },
            ) => {}
            Err(e) => s.last_error = Some(e.to_string()),
        }
        s.touch();
        if let Some(store) = &self.store {
            store.save(s)?;
        }
        result
    }

    fn record(s: &mut PipelineSession, stage: Stage, prompt: &PromptInstance, result: &CompletionResult) {
        s.ledger.push(StageRecord {
            stage,
            prompt_key: prompt.key,
            usage: result.usage,
            latency_ms: result.latency_ms,
        });
    }

    fn render(&self, key: PromptKey, bindings: BTreeMap<String, String>) -> Result<PromptInstance, PipelineError> {
        Ok(self.registry.render(key, &bindings)?)
    }

    /// A free-text layer: one call, no re-ask.
    fn ask_text(
        &self,
        s: &mut PipelineSession,
        stage: Stage,
        prompt: &PromptInstance,
    ) -> Result<String, PipelineError> {
        let request = CompletionRequest::from_prompt(prompt, &s.config.model);
        let result = self.client.complete(&request)?;
        Self::record(s, stage, prompt, &result);
        Ok(result.content)
    }

    /// A structured layer. The reply must be a JSON object accepted by
    /// `accept`; otherwise the model is re-asked once with the reason.
    /// The outer error is a backend failure; the inner one the final
    /// rejection reason.
    fn ask_json<T>(
        &self,
        s: &mut PipelineSession,
        stage: Stage,
        prompt: &PromptInstance,
        accept: impl Fn(&Json) -> Result<T, String>,
    ) -> Result<Result<T, String>, PipelineError> {
        let mut request = CompletionRequest::from_prompt(prompt, &s.config.model);
        let mut reason = String::new();
        for attempt in 0..2u32 {
            let (content, verdict) = match self.client.complete(&request) {
                Ok(result) => {
                    Self::record(s, stage, prompt, &result);
                    let verdict = match serde_json::from_str::<Json>(&result.content) {
                        Ok(obj) => accept(&obj),
                        Err(e) => Err(e.to_string()),
                    };
                    (result.content, verdict)
                }
                Err(LlmError::ResponseFormat { result, message }) => {
                    Self::record(s, stage, prompt, &result);
                    (result.content, Err(message))
                }
                Err(e) => return Err(e.into()),
            };
            match verdict {
                Ok(value) => return Ok(Ok(value)),
                Err(why) => {
                    tracing::debug!(key = %prompt.key, attempt, "rejected structured reply: {why}");
                    if attempt == 0 {
                        request = CompletionRequest::from_prompt(prompt, &s.config.model);
                        request.messages.push(Message::assistant(content));
                        request.messages.push(Message::user(format!(
                            "That answer could not be used: {why}. Reply again with only the corrected JSON object."
                        )));
                        if let Some(meta) = request.prompt.as_mut() {
                            meta.fingerprint = prompt.retry_fingerprint(1);
                        }
                    }
                    reason = why;
                }
            }
        }
        Ok(Err(reason))
    }

    // ---- session lifecycle -------------------------------------------------

    pub fn start_session(&self, request: &str, config: PipelineConfig) -> Result<PipelineSession, PipelineError> {
        if request.trim().is_empty() {
            return Err(PipelineError::Validation("request must not be empty".into()));
        }
        config.check()?;
        let now = Utc::now();
        let mut s = PipelineSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            request: request.to_string(),
            original_request: request.to_string(),
            stage: Stage::Created,
            history: vec![Stage::Created],
            skeleton: None,
            workflow: None,
            follow_ups: Vec::new(),
            screening_resolved: false,
            summary: None,
            feedback_approved: false,
            feedback_rounds: 0,
            pending_questions: Vec::new(),
            config,
            ledger: Vec::new(),
            diagnostics: Vec::new(),
            last_error: None,
            created_at: now,
            updated_at: now,
        };
        self.persist(&mut s, Ok(()))?;
        Ok(s)
    }

    // ---- screening ---------------------------------------------------------

    pub fn screen_request(&self, s: &mut PipelineSession) -> Result<ScreeningOutcome, PipelineError> {
        let r = self.screen_inner(s);
        self.persist(s, r)
    }

    fn screen_inner(&self, s: &mut PipelineSession) -> Result<ScreeningOutcome, PipelineError> {
        if s.stage != Stage::Created || !s.config.enable_screening || s.config.single_prompt_baseline {
            return stage_error("screen_request", s);
        }
        let prompt = self.render(PromptKey::Screening, crate::prompts::bindings([("request", s.request.clone())]))?;
        let text = self.ask_text(s, Stage::Screening, &prompt)?;
        let questions = non_empty_lines(&text);
        s.set_stage(Stage::Screening);
        if questions.is_empty() {
            return Ok(ScreeningOutcome::Clear);
        }
        s.follow_ups = questions.clone();
        s.set_stage(Stage::AwaitScreeningDecision);
        Ok(ScreeningOutcome::FollowUps(questions))
    }

    pub fn resolve_screening(&self, s: &mut PipelineSession, decision: ScreeningDecision) -> Result<(), PipelineError> {
        let r = (|| {
            if s.stage != Stage::AwaitScreeningDecision || s.screening_resolved {
                return stage_error("resolve_screening", s);
            }
            if let ScreeningDecision::Rewrite(text) = decision {
                if text.trim().is_empty() {
                    return Err(PipelineError::Validation("rewritten request must not be empty".into()));
                }
                s.request = text;
            }
            s.screening_resolved = true;
            Ok(())
        })();
        self.persist(s, r)
    }

    // ---- skeleton ----------------------------------------------------------

    pub fn build_skeleton<'s>(&self, s: &'s mut PipelineSession) -> Result<&'s Workflow, PipelineError> {
        let r = self.skeleton_inner(s);
        self.persist(s, r)?;
        Ok(s.skeleton.as_ref().expect("skeleton set on success"))
    }

    fn skeleton_inner(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let ready = match s.stage {
            Stage::Created => !s.config.enable_screening && !s.config.single_prompt_baseline,
            Stage::Screening => true,
            Stage::AwaitScreeningDecision => s.screening_resolved,
            _ => false,
        };
        if !ready {
            return stage_error("build_skeleton", s);
        }
        let general = self.render(PromptKey::GeneralProcess, crate::prompts::bindings([("request", s.request.clone())]))?;
        let process = match self.ask_json(s, Stage::SkeletonBuilt, &general, general_fields)? {
            Ok(doc) => doc,
            Err(why) => return Err(self.fail_skeleton(s, format!("general process: {why}"))),
        };
        let master = self.render(
            PromptKey::Master,
            crate::prompts::bindings([("request", s.request.clone()), ("process", canonical_json(&Value::Object(process.clone())))]),
        )?;
        let steps = match self.ask_json(s, Stage::SkeletonBuilt, &master, |obj| {
            let steps = obj.get("steps").ok_or("missing `steps`")?;
            steps_from_value(steps, "$.steps").map_err(|e| e.to_string())?;
            Ok(steps.clone())
        })? {
            Ok(steps) => steps,
            Err(why) => return Err(self.fail_skeleton(s, format!("steps: {why}"))),
        };
        let mut doc = process;
        let first = steps.as_array().and_then(|a| a.first()).and_then(|st| st.get("id")).cloned();
        doc.insert("steps".into(), steps);
        if !doc.get("defaultStartStepId").is_some_and(Value::is_string) {
            doc.insert("defaultStartStepId".into(), first.unwrap_or(Value::Null));
        }
        let id = workflow_id(doc.get("id").and_then(Value::as_str), &s.request);
        doc.insert("id".into(), Value::String(id));
        match workflow_from_value(&Value::Object(doc)) {
            Ok(w) => {
                s.skeleton = Some(w);
                s.set_stage(Stage::SkeletonBuilt);
                Ok(())
            }
            Err(e) => Err(self.fail_skeleton(s, e.to_string())),
        }
    }

    fn fail_skeleton(&self, s: &mut PipelineSession, why: String) -> PipelineError {
        s.set_stage(Stage::Failed);
        PipelineError::SkeletonParse(why)
    }

    // ---- feedback loop -----------------------------------------------------

    pub fn summarize(&self, s: &mut PipelineSession) -> Result<String, PipelineError> {
        let r = (|| {
            if s.stage != Stage::SkeletonBuilt || !s.config.feedback_active() {
                return stage_error("summarize", s);
            }
            let skeleton = s.skeleton.as_ref().expect("skeleton present after SkeletonBuilt");
            let prompt = self.render(PromptKey::Summary, crate::prompts::bindings([("workflow", serialize_canonical(skeleton))]))?;
            let text = self.ask_text(s, Stage::AwaitFeedback, &prompt)?;
            s.summary = Some(text.clone());
            s.feedback_approved = false;
            s.set_stage(Stage::AwaitFeedback);
            Ok(text)
        })();
        self.persist(s, r)
    }

    pub fn apply_feedback(
        &self,
        s: &mut PipelineSession,
        decision: FeedbackDecision,
    ) -> Result<FeedbackOutcome, PipelineError> {
        let r = self.feedback_inner(s, decision);
        self.persist(s, r)
    }

    fn feedback_inner(&self, s: &mut PipelineSession, decision: FeedbackDecision) -> Result<FeedbackOutcome, PipelineError> {
        if s.stage != Stage::AwaitFeedback || s.feedback_approved {
            return stage_error("apply_feedback", s);
        }
        let edits = match decision {
            FeedbackDecision::Approve => {
                s.feedback_approved = true;
                return Ok(FeedbackOutcome::Approved);
            }
            FeedbackDecision::Abort => {
                s.set_stage(Stage::Failed);
                s.last_error = Some("aborted during skeleton review".into());
                return Ok(FeedbackOutcome::Aborted);
            }
            FeedbackDecision::Edit(edits) => edits,
        };
        if edits.trim().is_empty() {
            return Err(PipelineError::Validation("edits must not be empty".into()));
        }
        if s.feedback_rounds >= s.config.max_feedback_loops {
            return Ok(FeedbackOutcome::LoopLimitReached);
        }
        let skeleton = s.skeleton.clone().expect("skeleton present during feedback");
        let revised = self.modify(s, Stage::SkeletonBuilt, &skeleton, &edits)?;
        s.skeleton = Some(revised);
        s.feedback_rounds += 1;
        s.summary = None;
        s.set_stage(Stage::SkeletonBuilt);
        Ok(FeedbackOutcome::Revised)
    }

    /// The Modification layer: returns the rewritten workflow or a
    /// `ModificationParse` error, leaving the input untouched.
    fn modify(&self, s: &mut PipelineSession, stage: Stage, w: &Workflow, edits: &str) -> Result<Workflow, PipelineError> {
        let prompt = self.render(
            PromptKey::Modification,
            crate::prompts::bindings([
                ("request", s.request.clone()),
                ("workflow", serialize_canonical(w)),
                ("edits", edits.to_string()),
            ]),
        )?;
        self.ask_json(s, stage, &prompt, |obj| workflow_from_value(&Value::Object(obj.clone())).map_err(|e| e.to_string()))?
            .map_err(PipelineError::ModificationParse)
    }

    // ---- experts -----------------------------------------------------------

    pub fn fill_details<'s>(&self, s: &'s mut PipelineSession) -> Result<&'s Workflow, PipelineError> {
        let r = (|| {
            let ready = match s.stage {
                Stage::SkeletonBuilt => !s.config.feedback_active(),
                Stage::AwaitFeedback => s.feedback_approved,
                _ => false,
            };
            if !ready {
                return stage_error("fill_details", s);
            }
            let mut w = s.skeleton.clone().expect("skeleton present");
            for i in chronological(&w) {
                self.complete_step(s, Stage::DetailsFilled, &mut w, i, needs_details)?;
            }
            s.workflow = Some(w);
            s.set_stage(Stage::DetailsFilled);
            Ok(())
        })();
        self.persist(s, r)?;
        Ok(s.workflow.as_ref().expect("workflow set on success"))
    }

    pub fn fill_parameters<'s>(&self, s: &'s mut PipelineSession) -> Result<&'s Workflow, PipelineError> {
        let r = (|| {
            if s.stage != Stage::DetailsFilled {
                return stage_error("fill_parameters", s);
            }
            let mut w = s.workflow.clone().expect("workflow present after DetailsFilled");
            for i in chronological(&w) {
                self.complete_step(s, Stage::ParametersFilled, &mut w, i, needs_parameters)?;
            }
            s.workflow = Some(w);
            s.set_stage(Stage::ParametersFilled);
            Ok(())
        })();
        self.persist(s, r)?;
        Ok(s.workflow.as_ref().expect("workflow set on success"))
    }

    /// Invokes experts on step `index` while `route` names one that has not
    /// been tried yet. A step an expert cannot complete after its re-ask
    /// becomes Unknown and gains a `lint/expert-failed` finding.
    fn complete_step(
        &self,
        s: &mut PipelineSession,
        stage: Stage,
        w: &mut Workflow,
        index: usize,
        route: fn(&crate::ir::Step) -> Option<PromptKey>,
    ) -> Result<(), PipelineError> {
        let mut tried = Vec::new();
        while let Some(key) = route(&w.steps[index]) {
            if tried.contains(&key) {
                break;
            }
            tried.push(key);
            let prompt = self.render(key, self.expert_bindings(s, w, index, key))?;
            match self.ask_json(s, stage, &prompt, |obj| merge_reply(w, index, key, obj))? {
                Ok(patch) => apply_patch(w, index, patch),
                Err(why) => {
                    let step = &w.steps[index];
                    s.diagnostics.push(crate::validate::Diagnostic::new(
                        "lint/expert-failed",
                        Some(&step.id),
                        format!("$.steps[{index}]"),
                        format!("{key} could not complete the step ({why}); kept as Unknown"),
                    ));
                    w.steps[index] = degrade_to_unknown(step);
                    break;
                }
            }
        }
        Ok(())
    }

    fn expert_bindings(&self, s: &PipelineSession, w: &Workflow, index: usize, key: PromptKey) -> BTreeMap<String, String> {
        let step = &w.steps[index];
        let mut all = BTreeMap::new();
        all.insert("request", s.request.clone());
        all.insert("workflow", serialize_canonical(w));
        all.insert("step", canonical_json(&crate::ir::serialize::step_to_value(step)));
        all.insert("context", canonical_json(&serde_json::to_value(&w.context).expect("context serializes")));
        if let StepKind::Api(api) = &step.kind {
            let functions: BTreeMap<&str, Vec<String>> = self
                .catalog
                .iter()
                .filter(|(tool, _, _)| *tool == api.tool)
                .map(|(_, f, e)| (f, e.to_vec()))
                .collect();
            all.insert("catalog", canonical_json(&json!(functions)));
            let essentials = api.function.as_deref().and_then(|f| self.catalog.essentials(api.tool, f)).unwrap_or(&[]);
            all.insert("essentials", canonical_json(&json!(essentials)));
        }
        key.placeholders()
            .iter()
            .map(|p| (p.to_string(), all.get(p).cloned().unwrap_or_default()))
            .collect()
    }

    // ---- missing parameters ------------------------------------------------

    pub fn generate_questions(&self, s: &mut PipelineSession) -> Result<Vec<Question>, PipelineError> {
        let r = (|| {
            if s.stage != Stage::ParametersFilled {
                return stage_error("generate_questions", s);
            }
            let w = s.workflow.as_ref().expect("workflow present");
            let missing = find_missing_essentials(w, &self.catalog);
            if missing.is_empty() {
                self.finalize(s);
                return Ok(Vec::new());
            }
            let prompt = self.render(
                PromptKey::Questions,
                crate::prompts::bindings([
                    ("request", s.request.clone()),
                    ("missing", canonical_json(&serde_json::to_value(&missing).expect("missing serializes"))),
                ]),
            )?;
            let text = self.ask_text(s, Stage::AwaitAnswers, &prompt)?;
            let mut lines = non_empty_lines(&text).into_iter();
            let questions: Vec<Question> = missing
                .into_iter()
                .map(|m| Question {
                    text: lines.next().unwrap_or_else(|| {
                        format!("What should `{}` be for step {} ({}.{})?", m.parameter, m.step_id, m.tool, m.function)
                    }),
                    step_id: m.step_id,
                    parameter: m.parameter,
                })
                .collect();
            s.pending_questions = questions.clone();
            s.set_stage(Stage::AwaitAnswers);
            Ok(questions)
        })();
        self.persist(s, r)
    }

    /// Writes answers verbatim into the step parameters. All answers must
    /// target pending questions or none is applied.
    pub fn apply_answers(&self, s: &mut PipelineSession, answers: &[Answer]) -> Result<(), PipelineError> {
        let r = (|| {
            if s.stage != Stage::AwaitAnswers {
                return stage_error("apply_answers", s);
            }
            for a in answers {
                if !s.pending_questions.iter().any(|q| q.step_id == a.step_id && q.parameter == a.parameter) {
                    return Err(PipelineError::UnknownQuestion { step_id: a.step_id.clone(), parameter: a.parameter.clone() });
                }
            }
            let w = s.workflow.as_mut().expect("workflow present");
            for a in answers {
                if let Some(StepKind::Api(api)) = w.step_mut(&a.step_id).map(|st| &mut st.kind) {
                    api.parameters.insert(a.parameter.clone(), Value::String(a.value.clone()));
                }
                s.pending_questions.retain(|q| !(q.step_id == a.step_id && q.parameter == a.parameter));
            }
            if s.pending_questions.is_empty() {
                self.finalize(s);
            } else {
                s.touch();
            }
            Ok(())
        })();
        self.persist(s, r)
    }

    fn refresh_diagnostics(&self, s: &mut PipelineSession) {
        s.diagnostics.retain(|d| d.rule == "lint/expert-failed");
        if let Some(w) = &s.workflow {
            s.diagnostics.extend(validate_all_with(w, &self.catalog));
        }
    }

    fn finalize(&self, s: &mut PipelineSession) {
        self.refresh_diagnostics(s);
        s.set_stage(Stage::Finalized);
    }

    // ---- final modification ------------------------------------------------

    /// Rewrites a finalized workflow from free-text edits. New steps and
    /// changed steps that lack expert-owned fields go through the experts
    /// again; the session stays Finalized.
    pub fn apply_modification<'s>(&self, s: &'s mut PipelineSession, edits: &str) -> Result<&'s Workflow, PipelineError> {
        let r = (|| {
            if s.stage != Stage::Finalized || s.workflow.is_none() {
                return stage_error("apply_modification", s);
            }
            if edits.trim().is_empty() {
                return Err(PipelineError::Validation("edits must not be empty".into()));
            }
            let old = s.workflow.clone().expect("checked above");
            let mut w = self.modify(s, Stage::Finalized, &old, edits)?;
            for i in chronological(&w) {
                if old.step(&w.steps[i].id) == Some(&w.steps[i]) {
                    continue;
                }
                self.complete_step(s, Stage::Finalized, &mut w, i, needs_details)?;
                self.complete_step(s, Stage::Finalized, &mut w, i, needs_parameters)?;
            }
            s.workflow = Some(w);
            self.refresh_diagnostics(s);
            Ok(())
        })();
        self.persist(s, r)?;
        Ok(s.workflow.as_ref().expect("workflow present"))
    }

    // ---- baseline ----------------------------------------------------------

    pub fn run_single_prompt_baseline<'s>(&self, s: &'s mut PipelineSession) -> Result<&'s Workflow, PipelineError> {
        let r = (|| {
            if s.stage != Stage::Created || !s.config.single_prompt_baseline {
                return stage_error("run_single_prompt_baseline", s);
            }
            let catalog: Vec<Value> = self
                .catalog
                .iter()
                .map(|(tool, f, e)| json!({"tool": tool.as_str(), "function": f, "essentials": e}))
                .collect();
            let prompt = self.render(
                PromptKey::Baseline,
                crate::prompts::bindings([("request", s.request.clone()), ("catalog", canonical_json(&json!(catalog)))]),
            )?;
            match self.ask_json(s, Stage::Finalized, &prompt, |obj| {
                workflow_from_value(&Value::Object(obj.clone())).map_err(|e| e.to_string())
            })? {
                Ok(w) => {
                    s.workflow = Some(w);
                    self.finalize(s);
                    Ok(())
                }
                Err(why) => Err(self.fail_skeleton(s, why)),
            }
        })();
        self.persist(s, r)?;
        Ok(s.workflow.as_ref().expect("workflow set on success"))
    }
}

/// Validates and normalises the GeneralProcess reply: every top-level field
/// except `steps`, with defaults for the optional ones.
fn general_fields(obj: &Json) -> Result<Json, String> {
    let mut doc = obj.clone();
    doc.remove("steps");
    for (k, default) in [("name", json!("")), ("description", json!("")), ("parameters", json!({})), ("context", json!({}))] {
        if doc.get(k).is_none_or(Value::is_null) {
            doc.insert(k.to_string(), default);
        }
    }
    let mut probe = doc.clone();
    probe.insert("id".into(), json!(workflow_id(None, "")));
    probe.insert("steps".into(), json!([]));
    if !probe.get("defaultStartStepId").is_some_and(Value::is_string) {
        probe.insert("defaultStartStepId".into(), json!("step-1"));
    }
    workflow_from_value(&Value::Object(probe)).map_err(|e| e.to_string())?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workflow_ids() {
        let given = "6f1c2d7a-3b4e-4c5d-8e9f-0a1b2c3d4e5f";
        assert_eq!(workflow_id(Some(given), "x"), given);
        let derived = workflow_id(Some("not-a-uuid"), "read my mail");
        assert_eq!(derived, workflow_id(None, "read my mail"));
        assert_ne!(derived, workflow_id(None, "read your mail"));
        assert!(uuid::Uuid::parse_str(&derived).is_ok());
    }

    #[test]
    fn general_fields_defaults() {
        let obj = json!({"name": "x", "steps": [1]});
        let doc = general_fields(obj.as_object().unwrap()).unwrap();
        assert!(!doc.contains_key("steps"));
        assert_eq!(doc["context"], json!({}));
        assert!(general_fields(json!({"context": 4}).as_object().unwrap()).is_err());
    }
}
