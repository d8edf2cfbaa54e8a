use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::ir::parse::{context_map, step_from_value};
use crate::ir::serialize::step_to_value;
use crate::ir::{ContextEntry, ExceptionFunction, LoopMode, Step, StepKind, Tool, UnknownStep, Workflow};
use crate::prompts::PromptKey;

/// The numeric part of a `step-N` id.
pub fn step_number(id: &str) -> Option<u64> {
    id.strip_prefix("step-")?.parse().ok()
}

/// Step indices in id-chronological order (by step number, then position).
pub(crate) fn chronological(w: &Workflow) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.steps.len()).collect();
    order.sort_by_key(|&i| (step_number(&w.steps[i].id).unwrap_or(u64::MAX), i));
    order
}

fn is_ui_function(tool: Tool, function: &str) -> Option<PromptKey> {
    if !matches!(tool, Tool::Web | Tool::Desktop) {
        return None;
    }
    match function {
        "WriteIn" => Some(PromptKey::ExpertWriteIn),
        "ClickSelector" => Some(PromptKey::ExpertClickSelector),
        _ => None,
    }
}

/// The expert prompt that still has work to do on this step, if any.
///
/// Experts are invoked only for the fields they own that are absent, so a
/// skeleton that already carries a value (or a step re-routed after a
/// modification) does not trigger a redundant call.
pub fn needs_details(step: &Step) -> Option<PromptKey> {
    match &step.kind {
        StepKind::Decision(d) => d.condition.is_none().then_some(PromptKey::ExpertDecision),
        StepKind::Loop(l) => {
            let incomplete = match l.mode {
                None => true,
                Some(LoopMode::ForEach) => l.collection_variable.is_none() || l.item_variable.is_none(),
                Some(LoopMode::While) => l.condition.is_none(),
            };
            incomplete.then_some(PromptKey::ExpertLoop)
        }
        StepKind::Calculation(c) => {
            (c.expression.is_none() || c.output_variable.is_none()).then_some(PromptKey::ExpertCalculation)
        }
        StepKind::DataExtraction(d) => {
            (d.source_variable.is_none() || d.extractions.is_none()).then_some(PromptKey::ExpertDataExtraction)
        }
        StepKind::Api(api) => match &api.function {
            None => Some(PromptKey::ExpertApiFunction),
            Some(f) => is_ui_function(api.tool, f).filter(|_| api.parameters.is_empty()),
        },
        StepKind::Exception(e) => {
            let incomplete = match e.function {
                None => true,
                Some(ExceptionFunction::CatchException) => e.error_variable.is_none(),
                Some(ExceptionFunction::TerminateProcess) => e.message.is_none(),
                Some(ExceptionFunction::TryBlock | ExceptionFunction::ThrowException) => false,
            };
            incomplete.then_some(PromptKey::ExpertTryCatch)
        }
        StepKind::Unknown(_) => None,
    }
}

/// The parameter-expert prompt that still has work to do on this step, if any.
pub fn needs_parameters(step: &Step) -> Option<PromptKey> {
    match &step.kind {
        StepKind::Api(api) => match &api.function {
            Some(f) if is_ui_function(api.tool, f).is_none() && api.parameters.is_empty() => {
                Some(PromptKey::ParamApi)
            }
            _ => None,
        },
        StepKind::Exception(e) => match e.function {
            Some(ExceptionFunction::TryBlock) if e.try_start_step_id.is_none() || e.catch_step_id.is_none() => {
                Some(PromptKey::ParamTryBlock)
            }
            Some(ExceptionFunction::ThrowException) if e.message.is_none() => Some(PromptKey::ParamThrowException),
            _ => None,
        },
        _ => None,
    }
}

/// A parsed expert reply: the completed step and any context variables it introduces.
#[derive(Debug)]
pub(crate) struct ExpertPatch {
    pub step: Step,
    pub context: BTreeMap<String, ContextEntry>,
}

/// Merges a flat expert reply into step `index`. Keys other than `id`, `type`
/// and `context` overwrite the step's keys; the result must still parse as a
/// step of the same type and must no longer need the same prompt.
pub(crate) fn merge_reply(
    w: &Workflow,
    index: usize,
    key: PromptKey,
    reply: &Map<String, Value>,
) -> Result<ExpertPatch, String> {
    let step = &w.steps[index];
    let context = match reply.get("context") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => context_map(v, "$.context").map_err(|e| e.to_string())?,
    };
    let mut value = step_to_value(step);
    let obj = value.as_object_mut().expect("steps serialize as objects");
    for (k, v) in reply {
        if !matches!(k.as_str(), "id" | "type" | "context") {
            obj.insert(k.clone(), v.clone());
        }
    }
    let merged = step_from_value(&value, &format!("$.steps[{index}]")).map_err(|e| e.to_string())?;
    if merged.step_type() != step.step_type() {
        return Err(format!("the reply changed the step type to {}", merged.step_type().type_name()));
    }
    if needs_details(&merged) == Some(key) || needs_parameters(&merged) == Some(key) {
        return Err("the reply left the step incomplete".into());
    }
    Ok(ExpertPatch { step: merged, context })
}

/// Applies a patch; existing context entries win over re-declarations.
pub(crate) fn apply_patch(w: &mut Workflow, index: usize, patch: ExpertPatch) {
    w.steps[index] = patch.step;
    for (name, entry) in patch.context {
        w.context.entry(name).or_insert(entry);
    }
}

/// The step an expert could not complete, kept in place as an Unknown step.
pub(crate) fn degrade_to_unknown(step: &Step) -> Step {
    Step {
        id: step.id.clone(),
        name: step.name.clone(),
        description: step.description.clone(),
        kind: StepKind::Unknown(UnknownStep {
            original_type: None,
            raw_description: step.description.clone(),
            parameters: BTreeMap::new(),
        }),
        next_step_id: step.next_step_id.clone(),
        extra: BTreeMap::new(),
    }
}
