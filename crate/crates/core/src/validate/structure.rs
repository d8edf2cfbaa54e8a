//! Per-step shape checks: required and undeclared fields, catalog functions,
//! expression syntax, `${}` syntax, context kinds and id uniqueness.

use std::collections::BTreeSet;

use crate::ir::vars::{executable_strings, scan_refs};
use crate::ir::*;

use super::catalog::EssentialCatalog;
use super::diagnostic::Diagnostic;

pub fn validate_structure(w: &Workflow) -> Vec<Diagnostic> {
    validate_structure_with(w, EssentialCatalog::builtin())
}

pub fn validate_structure_with(w: &Workflow, catalog: &EssentialCatalog) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if uuid::Uuid::parse_str(&w.id).is_err() {
        out.push(Diagnostic::new("structure/bad-id", None, "$.id", format!("workflow id `{}` is not a UUID", w.id)));
    }

    for (section, map) in [("parameters", &w.parameters), ("context", &w.context)] {
        for (name, entry) in map {
            if !entry.kind.accepts(&entry.value) {
                out.push(Diagnostic::new(
                    "structure/context-kind",
                    None,
                    format!("$.{section}.{name}.value"),
                    format!("value of `{name}` is not a {}", entry.kind),
                ));
            }
        }
    }

    let mut seen = BTreeSet::new();
    for (i, step) in w.steps.iter().enumerate() {
        if !seen.insert(step.id.as_str()) {
            out.push(Diagnostic::new(
                "structure/duplicate-id",
                Some(&step.id),
                format!("$.steps[{i}].id"),
                format!("step id `{}` is used more than once", step.id),
            ));
        }
        check_step(i, step, catalog, &mut out);
    }
    out
}

struct StepCheck<'a> {
    index: usize,
    step: &'a Step,
    out: &'a mut Vec<Diagnostic>,
}

impl StepCheck<'_> {
    fn path(&self, key: &str) -> String {
        format!("$.steps[{}].{key}", self.index)
    }

    fn push(&mut self, rule: &str, key: &str, message: String) {
        let path = self.path(key);
        self.out.push(Diagnostic::new(rule, Some(&self.step.id), path, message));
    }

    fn require<T>(&mut self, key: &str, value: &Option<T>) {
        if value.is_none() {
            let message = format!("{} step lacks `{key}`", self.step.step_type().type_name());
            self.push("structure/missing-field", key, message);
        }
    }

    fn forbid<T>(&mut self, key: &str, value: &Option<T>, context: &str) {
        if value.is_some() {
            self.push("structure/extra-key", key, format!("`{key}` is not part of {context}"));
        }
    }

    fn expression(&mut self, key: &str, expr: &Option<Expression>) {
        if let Some(e) = expr {
            if let Err(err) = e.parse() {
                self.push("structure/bad-expression", key, format!("`{}`: {err}", e.text()));
            }
        }
    }
}

fn check_step(index: usize, step: &Step, catalog: &EssentialCatalog, out: &mut Vec<Diagnostic>) {
    let mut c = StepCheck { index, step, out };
    match &step.kind {
        StepKind::Decision(d) => {
            c.require("condition", &d.condition);
            c.expression("condition", &d.condition);
            for (key, branch) in [("trueStepId", &d.true_step_id), ("falseStepId", &d.false_step_id)] {
                if branch.is_none() {
                    c.push("structure/missing-branch", key, format!("Decision lacks `{key}`"));
                }
            }
            c.forbid("nextStepId", &step.next_step_id, "a Decision; use the branch ids");
        }
        StepKind::Loop(l) => {
            c.require("mode", &l.mode);
            c.require("bodyStartStepId", &l.body_start_step_id);
            match l.mode {
                Some(LoopMode::ForEach) => {
                    c.require("collectionVariable", &l.collection_variable);
                    c.require("itemVariable", &l.item_variable);
                    c.forbid("condition", &l.condition, "a ForEach loop");
                }
                Some(LoopMode::While) => {
                    c.require("condition", &l.condition);
                    c.expression("condition", &l.condition);
                    c.forbid("collectionVariable", &l.collection_variable, "a While loop");
                    c.forbid("itemVariable", &l.item_variable, "a While loop");
                }
                None => {}
            }
        }
        StepKind::Calculation(calc) => {
            c.require("expression", &calc.expression);
            c.expression("expression", &calc.expression);
            c.require("outputVariable", &calc.output_variable);
        }
        StepKind::DataExtraction(d) => {
            c.require("sourceVariable", &d.source_variable);
            c.require("extractions", &d.extractions);
        }
        StepKind::Api(api) => {
            c.require("function", &api.function);
            if let Some(f) = &api.function {
                if !catalog.contains(api.tool, f) {
                    c.push("structure/unknown-function", "function", format!("{} has no function `{f}`", api.tool));
                }
            }
        }
        StepKind::Exception(e) => {
            c.require("function", &e.function);
            let what = e.function.map(|f| format!("an Exception/{}", f.as_str())).unwrap_or_default();
            match e.function {
                Some(ExceptionFunction::TryBlock) => {
                    c.require("tryStartStepId", &e.try_start_step_id);
                    c.require("catchStepId", &e.catch_step_id);
                    c.forbid("errorVariable", &e.error_variable, &what);
                    c.forbid("message", &e.message, &what);
                }
                Some(ExceptionFunction::CatchException) => {
                    c.require("errorVariable", &e.error_variable);
                    c.forbid("tryStartStepId", &e.try_start_step_id, &what);
                    c.forbid("catchStepId", &e.catch_step_id, &what);
                    c.forbid("message", &e.message, &what);
                }
                Some(ExceptionFunction::ThrowException | ExceptionFunction::TerminateProcess) => {
                    c.require("message", &e.message);
                    c.forbid("tryStartStepId", &e.try_start_step_id, &what);
                    c.forbid("catchStepId", &e.catch_step_id, &what);
                    c.forbid("errorVariable", &e.error_variable, &what);
                }
                None => {}
            }
        }
        StepKind::Unknown(_) => {}
    }

    for key in step.extra.keys() {
        let message = format!("`{key}` is not part of a {} step", step.step_type().type_name());
        c.push("structure/extra-key", key, message);
    }

    for text in executable_strings(step) {
        if let Err(err) = scan_refs(text) {
            let path = format!("$.steps[{index}]");
            c.out.push(Diagnostic::new("structure/bad-interpolation", Some(&step.id), path, format!("{err} in `{text}`")));
        }
    }
}
