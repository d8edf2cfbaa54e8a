//! `${name}` references: scanning, collection per step, and interpolation.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::model::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpolationError {
    #[error("unterminated `${{` at byte {offset}")]
    Unterminated { offset: usize },
    #[error("invalid variable name `{name}` at byte {offset}")]
    InvalidName { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error(transparent)]
    Interpolation(#[from] InterpolationError),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

pub fn is_variable_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A piece of a template: literal text or a variable reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Text(&'a str),
    Var(&'a str),
}

/// Splits a template into literal and `${name}` segments.
///
/// A `$` not followed by `{` is literal text.
pub fn segments(template: &str) -> Result<Vec<Segment<'_>>, InterpolationError> {
    let mut out = Vec::new();
    let mut rest_start = 0;
    let bytes = template.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'$' && bytes[i + 1] == b'{' {
            let close = template[i + 2..]
                .find('}')
                .ok_or(InterpolationError::Unterminated { offset: i })?;
            let name = &template[i + 2..i + 2 + close];
            if !is_variable_name(name) {
                return Err(InterpolationError::InvalidName { name: name.to_string(), offset: i });
            }
            if rest_start < i {
                out.push(Segment::Text(&template[rest_start..i]));
            }
            out.push(Segment::Var(name));
            i += 2 + close + 1;
            rest_start = i;
        } else {
            i += 1;
        }
    }
    if rest_start < template.len() {
        out.push(Segment::Text(&template[rest_start..]));
    }
    Ok(out)
}

pub fn scan_refs(template: &str) -> Result<Vec<String>, InterpolationError> {
    Ok(segments(template)?
        .into_iter()
        .filter_map(|s| match s {
            Segment::Var(v) => Some(v.to_string()),
            Segment::Text(_) => None,
        })
        .collect())
}

/// Returns the variable name when the template is exactly one `${name}`.
pub fn sole_reference(template: &str) -> Option<&str> {
    match segments(template).ok()?.as_slice() {
        [Segment::Var(v)] => Some(v),
        _ => None,
    }
}

/// Renders a bound value as text: strings verbatim, numbers in shortest
/// round-trip form, booleans as `true`/`false`, anything else as compact
/// canonical JSON.
pub fn render_value(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else if let Some(u) = n.as_u64() {
                u.to_string()
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.fract() == 0.0 && f.abs() < 1e15 {
                    format!("{}", f as i64)
                } else {
                    format!("{f}")
                }
            }
        }
        other => super::serialize::canonical_json(other),
    }
}

pub fn interpolate(template: &str, bindings: &BTreeMap<String, Value>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    for segment in segments(template)? {
        match segment {
            Segment::Text(t) => out.push_str(t),
            Segment::Var(name) => match bindings.get(name) {
                Some(v) if !v.is_null() => out.push_str(&render_value(v)),
                _ => return Err(TemplateError::UnboundVariable(name.to_string())),
            },
        }
    }
    Ok(out)
}

fn visit_value_strings<'a>(value: &'a Value, out: &mut Vec<&'a str>) {
    match value {
        Value::String(s) => out.push(s),
        Value::Array(items) => items.iter().for_each(|v| visit_value_strings(v, out)),
        Value::Object(map) => map.values().for_each(|v| visit_value_strings(v, out)),
        _ => {}
    }
}

/// Every free-text string a step carries, in a fixed order.
pub fn step_strings(step: &Step) -> Vec<&str> {
    let mut out: Vec<&str> = vec![&step.name, &step.description];
    out.extend(executable_strings(step));
    for v in step.extra.values() {
        visit_value_strings(v, &mut out);
    }
    out
}

/// Strings that are evaluated or interpolated when the step runs.
pub fn executable_strings(step: &Step) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    match &step.kind {
        StepKind::Decision(d) => out.extend(d.condition.as_ref().map(Expression::text)),
        StepKind::Loop(l) => out.extend(l.condition.as_ref().map(Expression::text)),
        StepKind::Calculation(c) => out.extend(c.expression.as_ref().map(Expression::text)),
        StepKind::DataExtraction(d) => {
            for e in d.extractions.iter().flatten() {
                out.push(&e.field);
                out.push(&e.hint);
            }
        }
        StepKind::Api(api) => api.parameters.values().for_each(|v| visit_value_strings(v, &mut out)),
        StepKind::Exception(e) => out.extend(e.message.as_deref()),
        StepKind::Unknown(u) => {
            out.push(&u.raw_description);
            u.parameters.values().for_each(|v| visit_value_strings(v, &mut out));
        }
    }
    out
}

/// Variable names held in dedicated name fields (not `${}` references).
pub fn named_variables(step: &Step) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    match &step.kind {
        StepKind::Loop(l) => {
            out.extend(l.collection_variable.as_deref());
            out.extend(l.item_variable.as_deref());
        }
        StepKind::Calculation(c) => out.extend(c.output_variable.as_deref()),
        StepKind::DataExtraction(d) => {
            out.extend(d.source_variable.as_deref());
            for e in d.extractions.iter().flatten() {
                out.push(&e.output_variable);
            }
        }
        StepKind::Api(api) => out.extend(api.output_variable.as_deref()),
        StepKind::Exception(e) => out.extend(e.error_variable.as_deref()),
        StepKind::Decision(_) | StepKind::Unknown(_) => {}
    }
    out.retain(|s| !s.is_empty());
    out
}

pub fn step_variable_refs(step: &Step) -> Result<BTreeSet<String>, InterpolationError> {
    let mut refs = BTreeSet::new();
    for s in step_strings(step) {
        refs.extend(scan_refs(s)?);
    }
    refs.extend(named_variables(step).into_iter().map(str::to_string));
    Ok(refs)
}

/// For each step, the `${var}` names in any of its strings plus the names in
/// its collection/item/source/output/error variable fields.
pub fn collect_variable_refs(w: &Workflow) -> Result<BTreeMap<StepId, BTreeSet<String>>, InterpolationError> {
    w.steps
        .iter()
        .map(|s| Ok((s.id.clone(), step_variable_refs(s)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bindings(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn interpolates_strings_and_numbers() {
        assert_eq!(interpolate("Hello ${x}", &bindings(&[("x", json!("world"))])).unwrap(), "Hello world");
        assert_eq!(interpolate("n=${n}", &bindings(&[("n", json!(5))])).unwrap(), "n=5");
        assert_eq!(interpolate("n=${n}", &bindings(&[("n", json!(5000.0))])).unwrap(), "n=5000");
        assert_eq!(interpolate("n=${n}", &bindings(&[("n", json!(0.1))])).unwrap(), "n=0.1");
        assert_eq!(interpolate("${b}", &bindings(&[("b", json!(true))])).unwrap(), "true");
        assert_eq!(
            interpolate("${l}", &bindings(&[("l", json!([{"b": 1, "a": 2}]))])).unwrap(),
            r#"[{"a":2,"b":1}]"#
        );
    }

    #[test]
    fn unbound_reference_is_reported() {
        let err = interpolate("Dear ${a}, re: ${b}", &bindings(&[("a", json!("Ann"))])).unwrap_err();
        assert_eq!(err, TemplateError::UnboundVariable("b".into()));
        let err = interpolate("${a}", &bindings(&[("a", Value::Null)])).unwrap_err();
        assert_eq!(err, TemplateError::UnboundVariable("a".into()));
    }

    #[test]
    fn dollar_without_brace_is_literal() {
        assert!(scan_refs("cost is $100").unwrap().is_empty());
        assert_eq!(interpolate("cost is $100", &BTreeMap::new()).unwrap(), "cost is $100");
        assert_eq!(scan_refs("$${x}$").unwrap(), vec!["x"]);
    }

    #[test]
    fn malformed_references() {
        assert_eq!(scan_refs("Dear ${name"), Err(InterpolationError::Unterminated { offset: 5 }));
        assert!(matches!(scan_refs("${1x}"), Err(InterpolationError::InvalidName { .. })));
        assert!(matches!(scan_refs("${}"), Err(InterpolationError::InvalidName { .. })));
    }

    #[test]
    fn sole_reference_detection() {
        assert_eq!(sole_reference("${bonus}"), Some("bonus"));
        assert_eq!(sole_reference("${a}${b}"), None);
        assert_eq!(sole_reference("x ${a}"), None);
    }
}
