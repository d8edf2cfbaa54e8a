use serde_json::{json, Map, Value};

use flowsmith_core::eval::DatasetSample;
use flowsmith_core::ir::serialize::{canonical_json, step_to_value, workflow_to_value};
use flowsmith_core::ir::{Step, StepKind, Workflow};
use flowsmith_core::llm::{estimate_tokens, BackendError, BackendReply, CompletionRequest, Responder, Role, TokenUsage};
use flowsmith_core::prompts::PromptKey;
use flowsmith_core::validate::step_defs;

use crate::{baseline_variant, skeleton_target, HARD_1_CLARIFICATION, HARD_1_FOLLOW_UPS};

/// Parameters the parameter expert leaves out for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strip {
    pub sample_id: String,
    pub step_id: String,
    pub parameters: Vec<String>,
}

impl Strip {
    /// The workflow with the stripped parameters removed.
    pub fn apply(&self, w: &Workflow) -> Workflow {
        let mut w = w.clone();
        if let Some(StepKind::Api(api)) = w.step_mut(&self.step_id).map(|s| &mut s.kind) {
            for p in &self.parameters {
                api.parameters.remove(p);
            }
        }
        w
    }
}

/// A scripted model that answers every prompt layer from the gold workflows.
///
/// Usage is the byte-length estimate of the messages and the reply; latency
/// is a fixed function of the completion size, so recordings are reproducible.
pub struct GoldResponder {
    samples: Vec<DatasetSample>,
    strip: Option<Strip>,
}

impl GoldResponder {
    pub fn new(samples: Vec<DatasetSample>) -> Self {
        GoldResponder { samples, strip: None }
    }

    pub fn with_strip(mut self, strip: Strip) -> Self {
        self.strip = Some(strip);
        self
    }

    /// The sample whose request the message quotes, longest request first.
    fn sample_quoted_in(&self, text: &str) -> Result<&DatasetSample, String> {
        self.samples
            .iter()
            .filter(|s| text.contains(&s.request))
            .max_by_key(|s| s.request.len())
            .ok_or_else(|| "no sample request in the prompt".to_string())
    }

    fn sample_by_workflow_id(&self, id: &str) -> Result<&DatasetSample, String> {
        self.samples.iter().find(|s| s.gold.id == id).ok_or_else(|| format!("no sample with workflow id {id}"))
    }

    fn reply(&self, key: PromptKey, user: &str, model: &str) -> Result<String, String> {
        if matches!(key, PromptKey::Summary) {
            let doc: Value = section(user, "Workflow:\n").and_then(|t| serde_json::from_str(t).ok()).ok_or("no workflow")?;
            self.sample_by_workflow_id(doc["id"].as_str().unwrap_or_default())?;
            let lines: Vec<String> = doc["steps"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|s| format!("{}: {}", s["id"].as_str().unwrap_or("?"), s["name"].as_str().unwrap_or("")))
                .collect();
            return Ok(lines.join("\n"));
        }
        let sample = self.sample_quoted_in(user)?;
        let clarified = user.contains(HARD_1_CLARIFICATION.trim());
        let reply = match key {
            PromptKey::Screening => {
                return Ok(if sample.id == "hard-1" && !clarified { HARD_1_FOLLOW_UPS.join("\n") } else { String::new() });
            }
            PromptKey::Questions => {
                let missing: Value =
                    section(user, "Missing:\n").and_then(|t| serde_json::from_str(t).ok()).ok_or("no missing list")?;
                let lines: Vec<String> = missing
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|m| {
                        format!(
                            "What should the {} of step {} be?",
                            m["parameter"].as_str().unwrap_or("?"),
                            m["stepId"].as_str().unwrap_or("?")
                        )
                    })
                    .collect();
                return Ok(lines.join("\n"));
            }
            PromptKey::GeneralProcess => general_process(&skeleton_target(sample, clarified), &sample.gold),
            PromptKey::Master => json!({"steps": skeleton_steps(&skeleton_target(sample, clarified))}),
            PromptKey::Modification => {
                let mut doc = general_process(&sample.gold, &sample.gold);
                doc["steps"] = json!(skeleton_steps(&sample.gold));
                doc
            }
            PromptKey::Baseline => workflow_to_value(&baseline_variant(sample, model)),
            expert => {
                let step_id = user
                    .lines()
                    .last()
                    .and_then(|l| serde_json::from_str::<Value>(l).ok())
                    .and_then(|v| v["id"].as_str().map(str::to_string))
                    .ok_or("no step in the prompt")?;
                let step = sample.gold.step(&step_id).ok_or_else(|| format!("{step_id} is not a gold step"))?;
                let mut reply = expert_reply(expert, step, &sample.gold);
                if let Some(strip) = self.strip.as_ref().filter(|s| s.sample_id == sample.id && s.step_id == step_id) {
                    if let Some(params) = reply.get_mut("parameters").and_then(Value::as_object_mut) {
                        for p in &strip.parameters {
                            params.remove(p);
                        }
                    }
                }
                Value::Object(reply)
            }
        };
        Ok(canonical_json(&reply))
    }
}

impl Responder for GoldResponder {
    fn respond(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        let key = request.prompt.as_ref().map(|p| p.key).ok_or_else(|| BackendError::Permanent("no prompt key".into()))?;
        let user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let content = self.reply(key, user, &request.model).map_err(|e| BackendError::Permanent(format!("{key}: {e}")))?;
        let usage = TokenUsage {
            input_tokens: request.messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
            completion_tokens: estimate_tokens(&content),
        };
        Ok(BackendReply { latency_ms: Some(400 + 2 * usage.completion_tokens), usage: Some(usage), content })
    }
}

/// The text after `header` up to the next blank line.
fn section<'t>(text: &'t str, header: &str) -> Option<&'t str> {
    let start = text.find(header)? + header.len();
    let rest = &text[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest))
}

/// Top-level fields of `target`, with the context entries no target step defines.
fn general_process(target: &Workflow, gold: &Workflow) -> Value {
    let defined: Vec<String> = target.steps.iter().flat_map(defined_vars).collect();
    let context: Map<String, Value> = gold
        .context
        .iter()
        .filter(|(name, _)| !defined.contains(name))
        .map(|(name, entry)| (name.clone(), serde_json::to_value(entry).expect("context serializes")))
        .collect();
    json!({
        "id": target.id,
        "name": target.name,
        "description": target.description,
        "parameters": target.parameters,
        "defaultStartStepId": target.default_start_step_id,
        "context": context,
    })
}

const SKELETON_KEYS: [&str; 5] = ["id", "name", "description", "type", "nextStepId"];

fn skeleton_steps(w: &Workflow) -> Vec<Value> {
    w.steps
        .iter()
        .map(|step| {
            let full = step_to_value(step);
            let extra: &[&str] = match &step.kind {
                StepKind::Decision(_) => &["trueStepId", "falseStepId"],
                StepKind::Loop(_) => &["bodyStartStepId"],
                StepKind::Exception(_) => &["function"],
                StepKind::Unknown(_) => return full,
                _ => &[],
            };
            pick(&full, SKELETON_KEYS.iter().chain(extra))
        })
        .collect()
}

fn pick<'k>(from: &Value, keys: impl IntoIterator<Item = &'k &'k str>) -> Value {
    let mut out = Map::new();
    for k in keys {
        if let Some(v) = from.get(*k) {
            out.insert(k.to_string(), v.clone());
        }
    }
    Value::Object(out)
}

/// Variables a step introduces: its outputs and a loop's item variable.
fn defined_vars(step: &Step) -> Vec<String> {
    let mut out = step_defs(step);
    if let StepKind::Loop(l) = &step.kind {
        out.extend(l.item_variable.clone());
    }
    out
}

fn expert_reply(key: PromptKey, step: &Step, gold: &Workflow) -> Map<String, Value> {
    let owned: &[&str] = match key {
        PromptKey::ExpertDecision => &["condition"],
        PromptKey::ExpertLoop => &["mode", "collectionVariable", "itemVariable", "condition"],
        PromptKey::ExpertCalculation => &["expression", "outputVariable"],
        PromptKey::ExpertDataExtraction => &["sourceVariable", "extractions"],
        PromptKey::ExpertApiFunction => &["function"],
        PromptKey::ParamApi | PromptKey::ExpertWriteIn | PromptKey::ExpertClickSelector => &["parameters", "outputVariable"],
        PromptKey::ExpertTryCatch => &["function", "errorVariable", "message"],
        PromptKey::ParamTryBlock => &["tryStartStepId", "catchStepId"],
        PromptKey::ParamThrowException => &["message"],
        _ => &[],
    };
    let full = step_to_value(step);
    let mut reply: Map<String, Value> = owned
        .iter()
        .filter_map(|k| full.get(*k).filter(|v| !v.is_null()).map(|v| (k.to_string(), v.clone())))
        .collect();
    if key != PromptKey::ExpertApiFunction {
        let context: Map<String, Value> = defined_vars(step)
            .into_iter()
            .filter_map(|v| gold.context.get(&v).map(|e| (v, serde_json::to_value(e).expect("context serializes"))))
            .collect();
        if !context.is_empty() {
            reply.insert("context".into(), Value::Object(context));
        }
    }
    reply
}
