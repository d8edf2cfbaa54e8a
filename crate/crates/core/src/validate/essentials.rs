use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ir::*;

use super::catalog::EssentialCatalog;
use super::diagnostic::Diagnostic;

/// An essential parameter of an API step that is absent, empty or null.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MissingParameter {
    pub step_id: StepId,
    pub parameter: String,
    pub tool: Tool,
    pub function: String,
}

fn is_gap(value: Option<&Value>) -> bool {
    match value {
        None | Some(Value::Null) => true,
        Some(Value::String(s)) => s.is_empty(),
        Some(_) => false,
    }
}

/// Step order, then catalog order within a step. Steps whose function is not
/// catalogued have no known essentials and are skipped.
pub fn find_missing_essentials(w: &Workflow, catalog: &EssentialCatalog) -> Vec<MissingParameter> {
    let mut out = Vec::new();
    for step in &w.steps {
        let StepKind::Api(api) = &step.kind else { continue };
        let Some(function) = &api.function else { continue };
        let Some(essentials) = catalog.essentials(api.tool, function) else { continue };
        for p in essentials {
            if is_gap(api.parameters.get(p)) {
                out.push(MissingParameter {
                    step_id: step.id.clone(),
                    parameter: p.clone(),
                    tool: api.tool,
                    function: function.clone(),
                });
            }
        }
    }
    out
}

pub fn essential_diagnostics(w: &Workflow, catalog: &EssentialCatalog) -> Vec<Diagnostic> {
    find_missing_essentials(w, catalog)
        .into_iter()
        .map(|m| {
            let i = w.step_index(&m.step_id).unwrap_or_default();
            Diagnostic::new(
                "essential/missing",
                Some(&m.step_id),
                format!("$.steps[{i}].parameters.{}", m.parameter),
                format!("{}.{} needs `{}`", m.tool, m.function, m.parameter),
            )
        })
        .collect()
}
