//! Step-id reference and reachability checks.

use crate::ir::*;

use super::cfg::{build_flow_graph, dangling_references, loop_body_is_open};
use super::diagnostic::Diagnostic;

/// Dangling references, unreachable steps, open loop bodies and TryBlocks
/// whose catch target is not a CatchException step.
///
/// Steps cut off only because a reference dangles are not reported as
/// unreachable: the dangling reference is the defect, the orphaned tail is its
/// consequence.
pub fn validate_graph(w: &Workflow) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let dangling = dangling_references(w);
    for d in &dangling {
        match d.step {
            None => out.push(Diagnostic::new(
                "graph/dangling-id",
                None,
                "$.defaultStartStepId",
                format!("start step `{}` does not exist", d.target),
            )),
            Some(i) => out.push(Diagnostic::new(
                "graph/dangling-id",
                Some(&w.steps[i].id),
                format!("$.steps[{i}].{}", d.field),
                format!("`{}` points to missing step `{}`", d.field, d.target),
            )),
        }
    }

    if dangling.is_empty() {
        let g = build_flow_graph(w);
        for (i, step) in w.steps.iter().enumerate() {
            if !g.reachable[i] {
                out.push(Diagnostic::new(
                    "graph/unreachable",
                    Some(&step.id),
                    format!("$.steps[{i}]"),
                    format!("step `{}` cannot be reached from `{}`", step.id, w.default_start_step_id),
                ));
            }
        }
    }

    for (i, step) in w.steps.iter().enumerate() {
        match &step.kind {
            StepKind::Loop(_) => {
                if loop_body_is_open(w, i) == Some(true) {
                    out.push(Diagnostic::new(
                        "graph/open-loop-body",
                        Some(&step.id),
                        format!("$.steps[{i}].bodyStartStepId"),
                        "the loop body never ends with a null nextStepId".to_string(),
                    ));
                }
            }
            StepKind::Exception(ExceptionStep {
                function: Some(ExceptionFunction::TryBlock),
                catch_step_id: Some(catch),
                ..
            }) => {
                let is_catch = w.step(catch).is_none_or(|s| {
                    matches!(
                        s.kind,
                        StepKind::Exception(ExceptionStep { function: Some(ExceptionFunction::CatchException), .. })
                    )
                });
                if !is_catch {
                    out.push(Diagnostic::new(
                        "graph/bad-catch",
                        Some(&step.id),
                        format!("$.steps[{i}].catchStepId"),
                        format!("catch target `{catch}` is not a CatchException step"),
                    ));
                }
            }
            _ => {}
        }
    }
    out
}
