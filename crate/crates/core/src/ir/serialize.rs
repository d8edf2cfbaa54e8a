//! Canonical serialization.
//!
//! Key order is fixed: `id, name, description, parameters, steps,
//! defaultStartStepId, context` at the top level and `id, name, description,
//! type, <variant keys>, <undeclared keys>, nextStepId` within steps. Every
//! free-form JSON object (parameter maps, context values, unknown payloads) is
//! emitted with sorted keys. Output is two-space indented with a trailing
//! newline.

use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeMap, SerializeSeq, Serializer};
use serde_json::Value;

use super::model::*;

pub fn serialize_canonical(w: &Workflow) -> String {
    let mut out = serde_json::to_string_pretty(w).expect("workflow serialization is infallible");
    out.push('\n');
    out
}

pub fn step_to_value(step: &Step) -> Value {
    serde_json::to_value(step).expect("step serialization is infallible")
}

pub fn workflow_to_value(w: &Workflow) -> Value {
    serde_json::to_value(w).expect("workflow serialization is infallible")
}

/// Compact canonical JSON for any value (sorted keys, no whitespace).
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(&Canon(value)).expect("value serialization is infallible")
}

/// Serializes a JSON value with object keys in sorted order regardless of how
/// `serde_json` was compiled.
pub(crate) struct Canon<'a>(pub &'a Value);

impl Serialize for Canon<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Value::Array(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(&Canon(item))?;
                }
                seq.end()
            }
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                let mut m = s.serialize_map(Some(keys.len()))?;
                for k in keys {
                    m.serialize_entry(k, &Canon(&map[k]))?;
                }
                m.end()
            }
            other => other.serialize(s),
        }
    }
}

struct CanonMap<'a>(&'a BTreeMap<String, Value>);

impl Serialize for CanonMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, &Canon(v))?;
        }
        m.end()
    }
}

impl Serialize for ContextEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("type", self.kind.as_str())?;
        m.serialize_entry("value", &Canon(&self.value))?;
        m.serialize_entry("description", &self.description)?;
        m.end()
    }
}

impl Serialize for Workflow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(7))?;
        m.serialize_entry("id", &self.id)?;
        m.serialize_entry("name", &self.name)?;
        m.serialize_entry("description", &self.description)?;
        m.serialize_entry("parameters", &self.parameters)?;
        m.serialize_entry("steps", &self.steps)?;
        m.serialize_entry("defaultStartStepId", &self.default_start_step_id)?;
        m.serialize_entry("context", &self.context)?;
        m.end()
    }
}

impl Serialize for Extraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("field", &self.field)?;
        m.serialize_entry("outputVariable", &self.output_variable)?;
        m.serialize_entry("hint", &self.hint)?;
        m.end()
    }
}

fn opt<M: SerializeMap, T: Serialize + ?Sized>(m: &mut M, key: &str, value: Option<&T>) -> Result<(), M::Error> {
    match value {
        Some(v) => m.serialize_entry(key, v),
        None => Ok(()),
    }
}

impl Serialize for Step {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("id", &self.id)?;
        m.serialize_entry("name", &self.name)?;
        m.serialize_entry("description", &self.description)?;
        let mut emit_next = true;
        match &self.kind {
            StepKind::Decision(d) => {
                m.serialize_entry("type", "Decision")?;
                opt(&mut m, "condition", d.condition.as_ref().map(Expression::text))?;
                opt(&mut m, "trueStepId", d.true_step_id.as_ref())?;
                opt(&mut m, "falseStepId", d.false_step_id.as_ref())?;
                emit_next = self.next_step_id.is_some();
            }
            StepKind::Loop(l) => {
                m.serialize_entry("type", "Loop")?;
                opt(&mut m, "mode", l.mode.map(LoopMode::as_str))?;
                opt(&mut m, "collectionVariable", l.collection_variable.as_ref())?;
                opt(&mut m, "itemVariable", l.item_variable.as_ref())?;
                opt(&mut m, "condition", l.condition.as_ref().map(Expression::text))?;
                opt(&mut m, "bodyStartStepId", l.body_start_step_id.as_ref())?;
            }
            StepKind::Calculation(c) => {
                m.serialize_entry("type", "Calculation")?;
                opt(&mut m, "expression", c.expression.as_ref().map(Expression::text))?;
                opt(&mut m, "outputVariable", c.output_variable.as_ref())?;
            }
            StepKind::DataExtraction(d) => {
                m.serialize_entry("type", "DataExtraction")?;
                opt(&mut m, "sourceVariable", d.source_variable.as_ref())?;
                opt(&mut m, "extractions", d.extractions.as_ref())?;
            }
            StepKind::Api(api) => {
                m.serialize_entry("type", api.tool.as_str())?;
                opt(&mut m, "function", api.function.as_ref())?;
                m.serialize_entry("parameters", &CanonMap(&api.parameters))?;
                m.serialize_entry("outputVariable", &api.output_variable)?;
            }
            StepKind::Exception(e) => {
                m.serialize_entry("type", "Exception")?;
                opt(&mut m, "function", e.function.map(ExceptionFunction::as_str))?;
                opt(&mut m, "tryStartStepId", e.try_start_step_id.as_ref())?;
                opt(&mut m, "catchStepId", e.catch_step_id.as_ref())?;
                opt(&mut m, "errorVariable", e.error_variable.as_ref())?;
                opt(&mut m, "message", e.message.as_ref())?;
            }
            StepKind::Unknown(u) => match &u.original_type {
                Some(type_name) => {
                    m.serialize_entry("type", type_name)?;
                    for (k, v) in &u.parameters {
                        if k != "nextStepId" {
                            m.serialize_entry(k, &Canon(v))?;
                        }
                    }
                }
                None => {
                    m.serialize_entry("type", "Unknown")?;
                    m.serialize_entry("rawDescription", &u.raw_description)?;
                    m.serialize_entry("parameters", &CanonMap(&u.parameters))?;
                }
            },
        }
        for (k, v) in &self.extra {
            m.serialize_entry(k, &Canon(v))?;
        }
        if emit_next {
            m.serialize_entry("nextStepId", &self.next_step_id)?;
        }
        m.end()
    }
}

impl Serialize for Tool {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> serde::Deserialize<'de> for Tool {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom(format!("unknown tool `{s}`")))
    }
}

impl<'de> serde::Deserialize<'de> for Workflow {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        super::parse::workflow_from_value(&value).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse::parse_workflow;

    const DOC: &str = r#"{
      "context": {"b": {"type": "number", "value": 1, "description": ""},
                  "a": {"description": "x", "value": null, "type": "string"}},
      "defaultStartStepId": "step-1",
      "steps": [{"nextStepId": null, "type": "Outlook", "outputVariable": "a",
                 "parameters": {"z": "1", "folder": "Inbox"}, "function": "ReadEmails",
                 "description": "d", "name": "n", "id": "step-1"}],
      "parameters": {}, "description": "desc", "name": "name",
      "id": "0b6f3c1e-2d4a-4c5b-8e9f-112233445566"
    }"#;

    #[test]
    fn keys_come_out_in_documented_order() {
        let w = parse_workflow(DOC).unwrap();
        let text = serialize_canonical(&w);
        let positions: Vec<usize> = ["\"id\"", "\"name\"", "\"description\"", "\"parameters\"", "\"steps\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(positions.windows(2).all(|p| p[0] < p[1]), "{text}");
        assert!(text.find("\"function\"").unwrap() < text.find("\"nextStepId\"").unwrap());
        assert!(text.find("\"folder\"").unwrap() < text.find("\"z\"").unwrap());
        assert!(text.ends_with("}\n"));
        assert!(text.contains("\n  \"name\""));
    }

    #[test]
    fn idempotent_round_trip() {
        let w = parse_workflow(DOC).unwrap();
        let once = serialize_canonical(&w);
        let again = serialize_canonical(&parse_workflow(&once).unwrap());
        assert_eq!(once, again);
    }

    #[test]
    fn unknown_payload_reemitted_flat() {
        let doc = DOC.replace("\"Outlook\"", "\"Teleport\"");
        let w = parse_workflow(&doc).unwrap();
        let value: Value = serde_json::from_str(&serialize_canonical(&w)).unwrap();
        let step = &value["steps"][0];
        assert_eq!(step["type"], "Teleport");
        assert_eq!(step["function"], "ReadEmails");
        assert_eq!(step["parameters"]["folder"], "Inbox");
        assert_eq!(step["outputVariable"], "a");
    }
}
