//! Workflow document parsing with JSON-path error reporting.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::model::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ParseError {
    fn schema(path: &str, message: impl Into<String>) -> Self {
        ParseError::Schema { path: path.to_string(), message: message.into() }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            ParseError::Schema { path, .. } => Some(path),
            ParseError::Syntax(_) => None,
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 7] =
    ["id", "name", "description", "parameters", "steps", "defaultStartStepId", "context"];

const COMMON_STEP_KEYS: [&str; 5] = ["id", "name", "description", "type", "nextStepId"];

pub fn parse_workflow(document: &str) -> Result<Workflow, ParseError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| ParseError::Syntax(e.to_string()))?;
    workflow_from_value(&value)
}

pub fn workflow_from_value(value: &Value) -> Result<Workflow, ParseError> {
    let obj = Obj::new(value, "$")?;
    let id = obj.required_str("id")?;
    let name = obj.required_str("name")?;
    let description = obj.required_str("description")?;
    let parameters = match obj.get("parameters") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => context_map(v, &obj.child("parameters"))?,
    };
    let steps_value = obj.required("steps")?;
    let steps_path = obj.child("steps");
    let steps = match steps_value {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| step_from_value(v, &format!("{steps_path}[{i}]")))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(ParseError::schema(&steps_path, "expected an array")),
    };
    let default_start_step_id = obj.required_str("defaultStartStepId")?;
    check_step_id(&default_start_step_id, &obj.child("defaultStartStepId"))?;
    let context = context_map(obj.required("context")?, &obj.child("context"))?;

    if let Some(key) = obj.map.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(ParseError::schema(&obj.child(key), "unknown top-level key"));
    }

    Ok(Workflow { id, name, description, parameters, steps, default_start_step_id, context })
}

/// Parses a list of steps as produced for the `steps` key.
pub fn steps_from_value(value: &Value, path: &str) -> Result<Vec<Step>, ParseError> {
    match value {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| step_from_value(v, &format!("{path}[{i}]")))
            .collect(),
        _ => Err(ParseError::schema(path, "expected an array")),
    }
}

pub fn context_map(value: &Value, path: &str) -> Result<BTreeMap<String, ContextEntry>, ParseError> {
    let map = value.as_object().ok_or_else(|| ParseError::schema(path, "expected an object"))?;
    map.iter()
        .map(|(name, v)| {
            let entry = context_entry(v, &format!("{path}.{name}"))?;
            Ok((name.clone(), entry))
        })
        .collect()
}

fn context_entry(value: &Value, path: &str) -> Result<ContextEntry, ParseError> {
    let obj = Obj::new(value, path)?;
    let type_name = obj.required_str("type")?;
    let kind = type_name.parse::<ContextType>().map_err(|_| {
        ParseError::schema(&obj.child("type"), format!("unknown context type `{type_name}`"))
    })?;
    let value = obj.get("value").cloned().unwrap_or(Value::Null);
    let description = obj.optional_str("description")?.unwrap_or_default();
    if let Some(key) = obj.map.keys().find(|k| !["type", "value", "description"].contains(&k.as_str())) {
        return Err(ParseError::schema(&obj.child(key), "unknown context entry key"));
    }
    Ok(ContextEntry { kind, value, description })
}

pub fn step_from_value(value: &Value, path: &str) -> Result<Step, ParseError> {
    let obj = Obj::new(value, path)?;
    let id = obj.required_str("id")?;
    check_step_id(&id, &obj.child("id"))?;
    let name = obj.required_str("name")?;
    let description = obj.required_str("description")?;
    let type_name = obj.required_str("type")?;
    let next_step_id = obj.optional_step_id("nextStepId")?;

    let mut used: Vec<&str> = COMMON_STEP_KEYS.to_vec();
    let kind = match type_name.as_str() {
        "Decision" => {
            used.extend(["condition", "trueStepId", "falseStepId"]);
            StepKind::Decision(Decision {
                condition: obj.optional_str("condition")?.map(Expression),
                true_step_id: obj.optional_step_id("trueStepId")?,
                false_step_id: obj.optional_step_id("falseStepId")?,
            })
        }
        "Loop" => {
            used.extend(["mode", "collectionVariable", "itemVariable", "condition", "bodyStartStepId"]);
            let mode = match obj.optional_str("mode")? {
                None => None,
                Some(m) => Some(m.parse::<LoopMode>().map_err(|_| {
                    ParseError::schema(&obj.child("mode"), format!("unknown loop mode `{m}`"))
                })?),
            };
            StepKind::Loop(LoopStep {
                mode,
                collection_variable: obj.optional_str("collectionVariable")?,
                item_variable: obj.optional_str("itemVariable")?,
                condition: obj.optional_str("condition")?.map(Expression),
                body_start_step_id: obj.optional_step_id("bodyStartStepId")?,
            })
        }
        "Calculation" => {
            used.extend(["expression", "outputVariable"]);
            StepKind::Calculation(Calculation {
                expression: obj.optional_str("expression")?.map(Expression),
                output_variable: obj.optional_str("outputVariable")?,
            })
        }
        "DataExtraction" => {
            used.extend(["sourceVariable", "extractions"]);
            let extractions = match obj.get("extractions") {
                None | Some(Value::Null) => None,
                Some(Value::Array(items)) => Some(
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| extraction(v, &format!("{}[{i}]", obj.child("extractions"))))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                Some(_) => return Err(ParseError::schema(&obj.child("extractions"), "expected an array")),
            };
            StepKind::DataExtraction(DataExtraction {
                source_variable: obj.optional_str("sourceVariable")?,
                extractions,
            })
        }
        "Exception" => {
            used.extend(["function", "tryStartStepId", "catchStepId", "errorVariable", "message"]);
            let function = match obj.optional_str("function")? {
                None => None,
                Some(f) => Some(f.parse::<ExceptionFunction>().map_err(|_| {
                    ParseError::schema(&obj.child("function"), format!("unknown exception function `{f}`"))
                })?),
            };
            StepKind::Exception(ExceptionStep {
                function,
                try_start_step_id: obj.optional_step_id("tryStartStepId")?,
                catch_step_id: obj.optional_step_id("catchStepId")?,
                error_variable: obj.optional_str("errorVariable")?,
                message: obj.optional_str("message")?,
            })
        }
        "Unknown" => {
            used.extend(["rawDescription", "parameters"]);
            StepKind::Unknown(UnknownStep {
                original_type: None,
                raw_description: obj.optional_str("rawDescription")?.unwrap_or_default(),
                parameters: obj.optional_object("parameters")?,
            })
        }
        other => match other.parse::<Tool>() {
            Ok(tool) => {
                used.extend(["function", "parameters", "outputVariable"]);
                StepKind::Api(ApiTask {
                    tool,
                    function: obj.optional_str("function")?,
                    parameters: obj.optional_object("parameters")?,
                    output_variable: obj.optional_str("outputVariable")?,
                })
            }
            Err(()) => {
                let parameters = obj
                    .map
                    .iter()
                    .filter(|(k, _)| !COMMON_STEP_KEYS.contains(&k.as_str()))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                return Ok(Step {
                    id,
                    name,
                    description,
                    kind: StepKind::Unknown(UnknownStep {
                        original_type: Some(other.to_string()),
                        raw_description: String::new(),
                        parameters,
                    }),
                    next_step_id,
                    extra: BTreeMap::new(),
                });
            }
        },
    };

    let extra = obj
        .map
        .iter()
        .filter(|(k, _)| !used.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(Step { id, name, description, kind, next_step_id, extra })
}

fn extraction(value: &Value, path: &str) -> Result<Extraction, ParseError> {
    let obj = Obj::new(value, path)?;
    Ok(Extraction {
        field: obj.required_str("field")?,
        output_variable: obj.required_str("outputVariable")?,
        hint: obj.optional_str("hint")?.unwrap_or_default(),
    })
}

/// Step ids are non-empty and limited to `[A-Za-z0-9_.:-]`, starting alphanumeric.
pub fn is_step_id(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
}

fn check_step_id(s: &str, path: &str) -> Result<(), ParseError> {
    if is_step_id(s) {
        Ok(())
    } else {
        Err(ParseError::schema(path, format!("`{s}` is not a valid step id")))
    }
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: &'a str,
}

impl<'a> Obj<'a> {
    fn new(value: &'a Value, path: &'a str) -> Result<Self, ParseError> {
        match value {
            Value::Object(map) => Ok(Obj { map, path }),
            _ => Err(ParseError::schema(path, "expected an object")),
        }
    }

    fn child(&self, key: &str) -> String {
        format!("{}.{}", self.path, key)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&'a Value, ParseError> {
        self.map
            .get(key)
            .ok_or_else(|| ParseError::schema(&self.child(key), "missing required key"))
    }

    fn required_str(&self, key: &str) -> Result<String, ParseError> {
        match self.required(key)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(ParseError::schema(&self.child(key), "expected a string")),
        }
    }

    fn optional_str(&self, key: &str) -> Result<Option<String>, ParseError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ParseError::schema(&self.child(key), "expected a string or null")),
        }
    }

    fn optional_step_id(&self, key: &str) -> Result<Option<StepId>, ParseError> {
        let id = self.optional_str(key)?;
        if let Some(id) = &id {
            check_step_id(id, &self.child(key))?;
        }
        Ok(id)
    }

    fn optional_object(&self, key: &str) -> Result<BTreeMap<String, Value>, ParseError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(BTreeMap::new()),
            Some(Value::Object(m)) => Ok(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
            Some(_) => Err(ParseError::schema(&self.child(key), "expected an object")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_reports_missing_id() {
        let err = parse_workflow("{}").unwrap_err();
        assert_eq!(err.path(), Some("$.id"));
    }

    #[test]
    fn malformed_json_is_a_syntax_error() {
        assert!(matches!(parse_workflow("{\"id\": "), Err(ParseError::Syntax(_))));
    }

    fn doc(steps: &str) -> String {
        format!(
            r#"{{"id":"7f0c2a64-5a3b-4a39-9d8e-0a1b2c3d4e5f","name":"n","description":"d",
               "parameters":{{}},"steps":{steps},"defaultStartStepId":"step-1","context":{{}}}}"#
        )
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let text = doc("[]").replacen("\"name\"", "\"colour\":1,\"name\"", 1);
        let err = parse_workflow(&text).unwrap_err();
        assert_eq!(err.path(), Some("$.colour"));
    }

    #[test]
    fn wrong_kind_carries_path() {
        let text = doc(r#"[{"id":"step-1","name":"a","description":"b","type":"Decision","trueStepId":7}]"#);
        let err = parse_workflow(&text).unwrap_err();
        assert_eq!(err.path(), Some("$.steps[0].trueStepId"));
    }

    #[test]
    fn unrecognised_type_becomes_unknown_with_payload() {
        let text = doc(
            r#"[{"id":"step-1","name":"a","description":"b","type":"Teleport","destination":"Mars","speed":9}]"#,
        );
        let w = parse_workflow(&text).unwrap();
        match &w.steps[0].kind {
            StepKind::Unknown(u) => {
                assert_eq!(u.original_type.as_deref(), Some("Teleport"));
                assert_eq!(u.parameters["destination"], Value::from("Mars"));
                assert_eq!(u.parameters["speed"], Value::from(9));
            }
            other => panic!("expected Unknown, got {other:?}"),
        }
    }

    #[test]
    fn unknown_context_type_is_schema_error() {
        let text = doc("[]").replace(
            "\"context\":{}",
            r#""context":{"x":{"type":"date","value":null,"description":""}}"#,
        );
        let err = parse_workflow(&text).unwrap_err();
        assert_eq!(err.path(), Some("$.context.x.type"));
    }

    #[test]
    fn undeclared_step_keys_are_kept_as_extra() {
        let text = doc(
            r#"[{"id":"step-1","name":"a","description":"b","type":"Exception","function":"TryBlock",
                 "tryStartStepId":"step-2","catchStepId":"step-3","retries":3}]"#,
        );
        let w = parse_workflow(&text).unwrap();
        assert_eq!(w.steps[0].extra.get("retries"), Some(&Value::from(3)));
    }

    #[test]
    fn step_id_syntax() {
        assert!(is_step_id("step-1"));
        assert!(is_step_id("a1b2c3d4-0000-4000-8000-000000000000"));
        assert!(!is_step_id(""));
        assert!(!is_step_id("step 1"));
        assert!(!is_step_id("-x"));
    }
}
