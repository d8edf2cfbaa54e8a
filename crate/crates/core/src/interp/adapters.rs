use std::collections::BTreeMap;

use serde_json::Value;

use crate::ir::Tool;

/// A failed tool call. Raised into the workflow, where a TryBlock can catch it.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct AdapterError(pub String);

impl AdapterError {
    pub fn new(message: impl Into<String>) -> Self {
        AdapterError(message.into())
    }
}

pub type Params = BTreeMap<String, Value>;

/// The functions of one tool.
pub trait ToolAdapter: Send {
    fn tool(&self) -> Tool;
    /// Every function name this adapter implements.
    fn functions(&self) -> &'static [&'static str];
    fn call(&mut self, function: &str, params: &Params) -> Result<Value, AdapterError>;
}

/// The adapters available to one execution, at most one per tool.
#[derive(Default)]
pub struct Adapters {
    by_tool: BTreeMap<Tool, Box<dyn ToolAdapter>>,
}

impl Adapters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, adapter: impl ToolAdapter + 'static) -> Self {
        self.insert(Box::new(adapter));
        self
    }

    pub fn insert(&mut self, adapter: Box<dyn ToolAdapter>) {
        self.by_tool.insert(adapter.tool(), adapter);
    }

    pub fn get_mut(&mut self, tool: Tool) -> Option<&mut (dyn ToolAdapter + 'static)> {
        self.by_tool.get_mut(&tool).map(|b| b.as_mut())
    }

    pub fn get(&self, tool: Tool) -> Option<&(dyn ToolAdapter + 'static)> {
        self.by_tool.get(&tool).map(|b| b.as_ref())
    }

    pub fn tools(&self) -> impl Iterator<Item = Tool> + '_ {
        self.by_tool.keys().copied()
    }
}

/// Reads a parameter that must be a non-empty string.
pub(crate) fn text<'a>(params: &'a Params, name: &str) -> Result<&'a str, AdapterError> {
    match params.get(name) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s),
        Some(Value::String(_)) | None | Some(Value::Null) => Err(AdapterError::new(format!("`{name}` is required"))),
        Some(other) => Err(AdapterError::new(format!("`{name}` must be text, got {other}"))),
    }
}

/// Reads an optional parameter as text, rendering scalars.
pub(crate) fn optional_text(params: &Params, name: &str) -> Option<String> {
    match params.get(name) {
        None | Some(Value::Null) => None,
        Some(v) => Some(crate::ir::vars::render_value(v)),
    }
}

/// Reads a positive integer given as a number or numeric text.
pub(crate) fn count(params: &Params, name: &str) -> Result<Option<usize>, AdapterError> {
    let bad = || AdapterError::new(format!("`{name}` must be a non-negative whole number"));
    match params.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_u64().map(|n| Some(n as usize)).ok_or_else(bad),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => s.trim().parse::<usize>().map(Some).map_err(|_| bad()),
        Some(_) => Err(bad()),
    }
}
