//! Semantic validation passes over a workflow.
//!
//! Each pass returns [`Diagnostic`]s; findings are data, never failures.
//! [`validate_all`] runs structure, graph, context, essential-parameter and
//! lint passes in that order. When the graph pass finds errors the later
//! passes are skipped, since dataflow over a broken graph is meaningless, and
//! a single `validate/aborted` warning is appended.

pub mod catalog;
pub mod cfg;
mod context;
mod diagnostic;
mod essentials;
mod graph;
mod lint;
mod structure;

pub use catalog::{CatalogError, EssentialCatalog};
pub use context::{must_defined, step_defs, step_uses, validate_context, PreconditionError};
pub use diagnostic::{has_errors, rule_info, to_json_lines, Diagnostic, RuleInfo, Severity, RULES};
pub use essentials::{essential_diagnostics, find_missing_essentials, MissingParameter};
pub use graph::validate_graph;
pub use lint::lint_common_errors;
pub use structure::{validate_structure, validate_structure_with};

use crate::ir::Workflow;

pub fn validate_all(w: &Workflow) -> Vec<Diagnostic> {
    validate_all_with(w, EssentialCatalog::builtin())
}

pub fn validate_all_with(w: &Workflow, catalog: &EssentialCatalog) -> Vec<Diagnostic> {
    let mut out = validate_structure_with(w, catalog);
    let graph = validate_graph(w);
    let graph_failed = has_errors(&graph);
    out.extend(graph);
    if graph_failed {
        out.push(Diagnostic::new(
            "validate/aborted",
            None,
            "$",
            "context, essential-parameter and lint passes skipped because of graph errors",
        ));
        return out;
    }
    out.extend(context::check_context(w));
    out.extend(essential_diagnostics(w, catalog));
    out.extend(lint_common_errors(w));
    out
}
