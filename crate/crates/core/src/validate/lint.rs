//! Heuristic warnings for failure modes typical of generated workflows.

use std::sync::OnceLock;

use regex::Regex;

use crate::ir::*;

use super::context::step_uses;
use super::diagnostic::Diagnostic;

/// Keyword patterns that make an Unknown step's intent obvious, with the tool they suggest.
fn tool_keywords() -> &'static [(Regex, Tool)] {
    static KEYWORDS: OnceLock<Vec<(Regex, Tool)>> = OnceLock::new();
    KEYWORDS.get_or_init(|| {
        [
            (r"(?i)\b(outlook|e-?mails?|mailbox|inbox)\b", Tool::Outlook),
            (r"(?i)\b(excel|spreadsheets?|work ?sheets?|workbooks?)\b", Tool::Excel),
            (r"(?i)\b(files?|folders?|director(y|ies))\b", Tool::File),
            (r"(?i)\b(web ?(page|site)?s?|browser|urls?)\b", Tool::Web),
            (r"(?i)\b(desktop|application window)\b", Tool::Desktop),
        ]
        .into_iter()
        .map(|(p, t)| (Regex::new(p).expect("keyword pattern compiles"), t))
        .collect()
    })
}

pub fn lint_common_errors(w: &Workflow) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let all_uses: Vec<String> = w.steps.iter().flat_map(step_uses).collect();
    for (i, step) in w.steps.iter().enumerate() {
        match &step.kind {
            StepKind::Unknown(u) => {
                let text = format!("{} {} {}", step.name, step.description, u.raw_description);
                if let Some((_, tool)) = tool_keywords().iter().find(|(re, _)| re.is_match(&text)) {
                    out.push(Diagnostic::new(
                        "lint/unknown-obvious",
                        Some(&step.id),
                        format!("$.steps[{i}].type"),
                        format!("step is Unknown but its description suggests a {tool} step"),
                    ));
                }
            }
            StepKind::Loop(l) if l.mode == Some(LoopMode::ForEach) => {
                let unset = |v: &Option<String>| v.as_deref().is_none_or(str::is_empty);
                let message = if unset(&l.collection_variable) {
                    Some("ForEach loop has no collectionVariable".to_string())
                } else if unset(&l.item_variable) {
                    Some("ForEach loop has no itemVariable".to_string())
                } else {
                    let item = l.item_variable.as_deref().unwrap_or_default();
                    (!all_uses.iter().any(|u| u == item)).then(|| format!("loop item `{item}` is never used"))
                };
                if let Some(message) = message {
                    out.push(Diagnostic::new("lint/loop-params", Some(&step.id), format!("$.steps[{i}]"), message));
                }
            }
            StepKind::Decision(Decision { true_step_id: Some(t), false_step_id: Some(f), .. }) if t == f => {
                out.push(Diagnostic::new(
                    "lint/degenerate-decision",
                    Some(&step.id),
                    format!("$.steps[{i}]"),
                    format!("both branches go to `{t}`"),
                ));
            }
            _ => {}
        }
    }
    out
}
