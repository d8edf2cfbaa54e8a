//! Context dataflow: declaration, define-before-use and extraction sources.
//!
//! A variable counts as defined at a step only if it is assigned on every
//! control path from the start step (must-analysis over the flow graph).

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::vars::{executable_strings, scan_refs};
use crate::ir::*;

use super::cfg::{build_flow_graph, FlowGraph};
use super::diagnostic::{has_errors, Diagnostic};
use super::graph::validate_graph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("context validation requires a graph without errors ({0} found)")]
pub struct PreconditionError(pub usize);

/// Variables a step reads, in first-seen order.
pub fn step_uses(step: &Step) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut add = |v: &str| {
        if !v.is_empty() && !out.iter().any(|o| o == v) {
            out.push(v.to_string());
        }
    };
    for text in executable_strings(step) {
        for r in scan_refs(text).unwrap_or_default() {
            add(&r);
        }
    }
    match &step.kind {
        StepKind::DataExtraction(d) => d.source_variable.as_deref().into_iter().for_each(&mut add),
        StepKind::Loop(l) if l.mode != Some(LoopMode::While) => {
            l.collection_variable.as_deref().into_iter().for_each(&mut add)
        }
        _ => {}
    }
    out
}

/// Variables a step assigns when it runs. Loop item variables are assigned on
/// the edge into the body instead.
pub fn step_defs(step: &Step) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    match &step.kind {
        StepKind::Api(api) => out.extend(api.output_variable.clone()),
        StepKind::Calculation(c) => out.extend(c.output_variable.clone()),
        StepKind::DataExtraction(d) => {
            out.extend(d.extractions.iter().flatten().map(|e| e.output_variable.clone()))
        }
        StepKind::Exception(e) if e.function == Some(ExceptionFunction::CatchException) => {
            out.extend(e.error_variable.clone())
        }
        _ => {}
    }
    out.retain(|v| !v.is_empty());
    out
}

/// Variable names introduced by steps rather than by the context table.
pub fn step_declared(step: &Step) -> Option<&str> {
    match &step.kind {
        StepKind::Loop(l) if l.mode != Some(LoopMode::While) => l.item_variable.as_deref(),
        StepKind::Exception(e) if e.function == Some(ExceptionFunction::CatchException) => e.error_variable.as_deref(),
        _ => None,
    }
    .filter(|v| !v.is_empty())
}

fn is_string_context(w: &Workflow, name: &str) -> bool {
    w.context.get(name).or_else(|| w.parameters.get(name)).is_some_and(|e| e.kind == ContextType::String)
}

/// Variables assigned on every path into each step (`None` for unreachable steps).
pub fn must_defined(w: &Workflow, g: &FlowGraph) -> Vec<Option<BTreeSet<String>>> {
    let initial: BTreeSet<String> = w
        .context
        .iter()
        .chain(&w.parameters)
        .filter(|(_, e)| !e.value.is_null())
        .map(|(k, _)| k.clone())
        .collect();
    let defs: Vec<Vec<String>> = w.steps.iter().map(step_defs).collect();
    let mut ins: Vec<Option<BTreeSet<String>>> = vec![None; w.steps.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for to in 0..w.steps.len() {
            if !g.reachable[to] {
                continue;
            }
            let mut acc: Option<BTreeSet<String>> = (g.start == Some(to)).then(|| initial.clone());
            for e in g.predecessors(to) {
                let Some(pin) = &ins[e.from] else { continue };
                let mut out = pin.clone();
                out.extend(defs[e.from].iter().cloned());
                out.extend(e.binds.iter().cloned());
                acc = Some(match acc {
                    None => out,
                    Some(a) => a.intersection(&out).cloned().collect(),
                });
            }
            if acc.is_some() && acc != ins[to] {
                ins[to] = acc;
                changed = true;
            }
        }
    }
    ins
}

pub fn validate_context(w: &Workflow) -> Result<Vec<Diagnostic>, PreconditionError> {
    let graph_findings = validate_graph(w);
    if has_errors(&graph_findings) {
        return Err(PreconditionError(graph_findings.iter().filter(|d| d.is_error()).count()));
    }
    Ok(check_context(w))
}

pub(crate) fn check_context(w: &Workflow) -> Vec<Diagnostic> {
    let g = build_flow_graph(w);
    let ins = must_defined(w, &g);

    let mut declared: BTreeSet<&str> = w.context.keys().chain(w.parameters.keys()).map(String::as_str).collect();
    declared.extend(w.steps.iter().filter_map(step_declared));

    let mut out = Vec::new();
    let mut read: BTreeSet<String> = BTreeSet::new();
    for (i, step) in w.steps.iter().enumerate() {
        let here = |s: &str| format!("$.steps[{i}]{s}");
        let bad_source = match &step.kind {
            StepKind::DataExtraction(DataExtraction { source_variable: Some(src), .. })
                if !is_string_context(w, src) =>
            {
                out.push(Diagnostic::new(
                    "context/extract-source",
                    Some(&step.id),
                    here(".sourceVariable"),
                    format!("`{src}` is not a string variable in the context; extraction reads stored text"),
                ));
                Some(src.as_str())
            }
            _ => None,
        };
        for v in step_uses(step) {
            read.insert(v.clone());
            if Some(v.as_str()) == bad_source {
                continue;
            }
            if !declared.contains(v.as_str()) {
                out.push(Diagnostic::new(
                    "context/undeclared",
                    Some(&step.id),
                    here(""),
                    format!("`{v}` is not declared in the context"),
                ));
            } else if ins[i].as_ref().is_some_and(|defined| !defined.contains(&v)) {
                out.push(Diagnostic::new(
                    "context/use-before-def",
                    Some(&step.id),
                    here(""),
                    format!("`{v}` may be read before it is assigned"),
                ));
            }
        }
        for v in step_defs(step) {
            if !declared.contains(v.as_str()) {
                out.push(Diagnostic::new(
                    "context/undeclared",
                    Some(&step.id),
                    here(""),
                    format!("output `{v}` is not declared in the context"),
                ));
            }
        }
    }

    let defined: BTreeSet<String> = w.steps.iter().flat_map(step_defs).collect();
    let mut dead: BTreeMap<&str, &str> = BTreeMap::new();
    for name in w.context.keys().chain(w.parameters.keys()) {
        if !read.contains(name) && !defined.contains(name) {
            dead.insert(name, "is declared but never used");
        }
    }
    for step in &w.steps {
        if matches!(step.kind, StepKind::Calculation(_) | StepKind::DataExtraction(_)) {
            for v in step_defs(step) {
                if !read.contains(&v) && declared.contains(v.as_str()) {
                    let name = declared.get(v.as_str()).copied().unwrap_or_default();
                    dead.entry(name).or_insert("is computed but never read");
                }
            }
        }
    }
    for (name, why) in dead {
        let path = if w.context.contains_key(name) { format!("$.context.{name}") } else { "$.context".to_string() };
        out.push(Diagnostic::new("context/dead-var", None, path, format!("`{name}` {why}")));
    }
    out
}
