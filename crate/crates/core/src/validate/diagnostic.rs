use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub struct RuleInfo {
    pub id: &'static str,
    pub severity: Severity,
    pub summary: &'static str,
}

const fn rule(id: &'static str, severity: Severity, summary: &'static str) -> RuleInfo {
    RuleInfo { id, severity, summary }
}

use Severity::{Error, Warning};

/// Every rule id a [`Diagnostic`] may carry.
pub const RULES: &[RuleInfo] = &[
    rule("structure/missing-field", Error, "a field the step variant requires is absent"),
    rule("structure/missing-branch", Error, "a Decision lacks trueStepId or falseStepId"),
    rule("structure/extra-key", Error, "a step carries a key its variant does not declare"),
    rule("structure/unknown-function", Error, "an API step names a function its tool does not offer"),
    rule("structure/bad-expression", Error, "an expression does not parse"),
    rule("structure/bad-interpolation", Error, "a string holds a malformed `${...}` reference"),
    rule("structure/context-kind", Error, "a context value does not match its declared type"),
    rule("structure/duplicate-id", Error, "two steps share an id"),
    rule("structure/bad-id", Error, "the workflow id is not a UUID"),
    rule("graph/dangling-id", Error, "a step-id reference resolves to no step"),
    rule("graph/unreachable", Error, "a step cannot be reached from defaultStartStepId"),
    rule("graph/open-loop-body", Error, "a loop body cycles without returning to its header"),
    rule("graph/bad-catch", Error, "a TryBlock's catchStepId is not a CatchException step"),
    rule("context/use-before-def", Error, "a variable may be read before it is assigned"),
    rule("context/undeclared", Error, "a referenced variable is not declared in the context"),
    rule("context/extract-source", Error, "a DataExtraction does not read a string context variable"),
    rule("context/dead-var", Warning, "a variable is never read"),
    rule("essential/missing", Error, "an essential API parameter is absent, empty or null"),
    rule("lint/unknown-obvious", Warning, "an Unknown step describes an obvious tool action"),
    rule("lint/loop-params", Warning, "a loop's collection or item variable is unset or unused"),
    rule("lint/degenerate-decision", Warning, "both branches of a Decision lead to the same step"),
    rule("lint/expert-failed", Warning, "the expert prompt could not fill this step"),
    rule("validate/aborted", Warning, "later passes skipped because of graph errors"),
    rule("score/unaligned-step", Error, "a gold step has no counterpart in the candidate"),
    rule("score/extra-step", Error, "a candidate step has no counterpart in the gold"),
    rule("score/wrong-function", Error, "an aligned API step calls a different catalog function"),
    rule("score/hallucinated-function", Error, "a candidate API step calls a function no tool offers"),
    rule("score/hallucinated-key", Error, "a candidate step carries undeclared keys"),
    rule("score/flow-mismatch", Error, "aligned steps are linked differently than in the gold"),
    rule("score/dangling-id", Error, "a candidate step-id reference resolves to no step"),
    rule("score/missing-loop", Error, "a gold Loop structure is missing from the candidate"),
    rule("score/extract-misuse", Error, "a DataExtraction reads a different source than the gold"),
    rule("score/param-value", Warning, "an aligned step has a different parameter value"),
    rule("score/missing-prefix", Warning, "a variable is referenced without the `${}` prefix"),
    rule("score/expression", Warning, "an aligned step has a different expression"),
    rule("score/extra-param", Warning, "an aligned API step has an extra parameter key"),
    rule("score/empty", Error, "the candidate has no usable steps"),
];

pub fn rule_info(id: &str) -> Option<&'static RuleInfo> {
    RULES.iter().find(|r| r.id == id)
}

/// A validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostic {
    pub rule: String,
    pub severity: Severity,
    pub step_id: Option<String>,
    pub message: String,
    pub json_path: String,
}

impl Diagnostic {
    /// Builds a diagnostic for a registered rule, taking the severity from the registry.
    ///
    /// # Panics
    /// If `rule` is not in [`RULES`].
    pub fn new(rule: &str, step_id: Option<&str>, json_path: impl Into<String>, message: impl Into<String>) -> Self {
        let info = rule_info(rule).unwrap_or_else(|| panic!("unregistered rule `{rule}`"));
        Diagnostic {
            rule: info.id.to_string(),
            severity: info.severity,
            step_id: step_id.map(str::to_string),
            message: message.into(),
            json_path: json_path.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.severity, self.rule, self.step_id.as_deref().unwrap_or("-"), self.message)
    }
}

/// One compact JSON object per diagnostic, newline-terminated.
pub fn to_json_lines(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| serde_json::to_string(d).expect("diagnostic serialization is infallible") + "\n")
        .collect()
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_ids_are_unique() {
        let mut ids: Vec<_> = RULES.iter().map(|r| r.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), RULES.len());
    }

    #[test]
    fn display_and_json_lines() {
        let d = Diagnostic::new("graph/dangling-id", Some("step-1"), "$.steps[0].nextStepId", "`step-999` does not exist");
        assert_eq!(d.to_string(), "error graph/dangling-id step-1 `step-999` does not exist");
        let line = to_json_lines(std::slice::from_ref(&d));
        assert!(line.ends_with('\n'));
        let back: Diagnostic = serde_json::from_str(line.trim_end()).unwrap();
        assert_eq!(back, d);
        assert!(line.contains("\"stepId\":\"step-1\""));
    }
}
