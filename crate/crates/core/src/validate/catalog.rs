//! The function catalog and the essential parameters of each function.
//!
//! The catalog is data: a JSON object mapping `"Tool.Function"` to the list
//! of parameter names that must be filled before the function can run. The
//! set of keys doubles as the list of functions each tool offers.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::ir::Tool;
use crate::unique_map::UniqueMap;

const BUILTIN: &str = include_str!("../../catalog/essentials.json");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog is not a JSON object of string lists: {0}")]
    Format(String),
    #[error("catalog key `{0}` is not of the form `Tool.Function` with a known tool")]
    BadKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EssentialCatalog {
    entries: BTreeMap<(Tool, String), Vec<String>>,
}

impl EssentialCatalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let raw: UniqueMap<Vec<String>> =
            serde_json::from_str(text).map_err(|e| CatalogError::Format(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (key, params) in raw.0 {
            let (tool, function) = key.split_once('.').ok_or_else(|| CatalogError::BadKey(key.clone()))?;
            let tool: Tool = tool.parse().map_err(|_| CatalogError::BadKey(key.clone()))?;
            if function.is_empty() {
                return Err(CatalogError::BadKey(key));
            }
            entries.insert((tool, function.to_string()), params);
        }
        Ok(EssentialCatalog { entries })
    }

    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static EssentialCatalog {
        static CATALOG: OnceLock<EssentialCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| EssentialCatalog::from_json(BUILTIN).expect("shipped catalog is well-formed"))
    }

    pub fn contains(&self, tool: Tool, function: &str) -> bool {
        self.entries.contains_key(&(tool, function.to_string()))
    }

    /// Essential parameters of a function, or `None` if it is not catalogued.
    pub fn essentials(&self, tool: Tool, function: &str) -> Option<&[String]> {
        self.entries.get(&(tool, function.to_string())).map(Vec::as_slice)
    }

    pub fn functions(&self, tool: Tool) -> impl Iterator<Item = &str> {
        self.entries.keys().filter(move |(t, _)| *t == tool).map(|(_, f)| f.as_str())
    }

    /// Whether any tool offers a function of this name.
    pub fn is_known_function(&self, function: &str) -> bool {
        self.entries.keys().any(|(_, f)| f == function)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Tool, &str, &[String])> {
        self.entries.iter().map(|((t, f), p)| (*t, f.as_str(), p.as_slice()))
    }
}
