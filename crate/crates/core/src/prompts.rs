//! Prompt template registry and deterministic rendering.
//!
//! Each [`PromptKey`] has one template asset `<Key>.prompt.txt` with a
//! `[system]` and a `[user]` section. Placeholders are written `{{name}}`,
//! distinct from the `${var}` syntax used inside workflows. Few-shot examples
//! are introduced by lines starting with `### Example`.
//!
//! Rendering substitutes placeholders in a single pass and computes a
//! fingerprint from the key, a hash of the template text and the bindings.
//! The replay backend looks completions up by that fingerprint, so editing a
//! template invalidates recordings made against the old text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

macro_rules! prompt_keys {
    ($($key:ident => [$($ph:literal),*]),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum PromptKey { $($key),* }

        impl PromptKey {
            pub const ALL: &'static [PromptKey] = &[$(PromptKey::$key),*];

            pub fn as_str(self) -> &'static str {
                match self { $(PromptKey::$key => stringify!($key)),* }
            }

            /// The placeholder names the template must use, and bindings must supply.
            pub fn placeholders(self) -> &'static [&'static str] {
                match self { $(PromptKey::$key => &[$($ph),*]),* }
            }

            fn builtin_asset(self) -> &'static str {
                match self {
                    $(PromptKey::$key => include_str!(concat!("../prompts/", stringify!($key), ".prompt.txt"))),*
                }
            }
        }
    };
}

prompt_keys! {
    Screening => ["request"],
    GeneralProcess => ["request"],
    Master => ["request", "process"],
    Summary => ["workflow"],
    Modification => ["request", "workflow", "edits"],
    ExpertDecision => ["request", "workflow", "step", "context"],
    ExpertLoop => ["request", "workflow", "step", "context"],
    ExpertCalculation => ["request", "workflow", "step", "context"],
    ExpertDataExtraction => ["request", "workflow", "step", "context"],
    ExpertApiFunction => ["request", "step", "catalog"],
    ExpertWriteIn => ["request", "step", "context"],
    ExpertClickSelector => ["request", "step", "context"],
    ExpertTryCatch => ["request", "workflow", "step", "context"],
    ParamApi => ["request", "step", "context", "essentials"],
    ParamTryBlock => ["request", "workflow", "step"],
    ParamThrowException => ["request", "step", "context"],
    Questions => ["request", "missing"],
    Baseline => ["request", "catalog"],
}

impl PromptKey {
    /// Number of few-shot examples the template must carry.
    pub fn required_examples(self) -> std::ops::RangeInclusive<usize> {
        match self {
            PromptKey::Master => 4..=4,
            PromptKey::ExpertLoop => 2..=2,
            _ => 0..=1,
        }
    }

    /// Whether the layer expects a JSON object back rather than free text.
    pub fn expects_json(self) -> bool {
        !matches!(self, PromptKey::Screening | PromptKey::Summary | PromptKey::Questions)
    }
}

impl fmt::Display for PromptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKey {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, PromptError> {
        PromptKey::ALL.iter().copied().find(|k| k.as_str() == s).ok_or_else(|| PromptError::UnknownKey(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown prompt key `{0}`")]
    UnknownKey(String),
    #[error("missing binding for placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("binding `{0}` does not name a placeholder of this template")]
    UnexpectedBinding(String),
    #[error("template {key}: {message}")]
    Template { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub key: PromptKey,
    /// The asset text as shipped, both sections included.
    pub body: String,
    pub system: String,
    pub user: String,
    pub placeholders: Vec<String>,
    pub example_count: usize,
    body_hash: String,
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Placeholder names in order of first appearance.
fn scan_placeholders(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| "unterminated `{{`".to_string())?;
        let name = &after[..close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("malformed placeholder `{{{{{name}}}}}`"));
        }
        if !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
        rest = &after[close + 2..];
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn parse(key: PromptKey, body: &str) -> Result<Self, PromptError> {
        let err = |message: String| PromptError::Template { key: key.to_string(), message };
        let body = body.replace("\r\n", "\n");
        let rest = body.strip_prefix("[system]\n").ok_or_else(|| err("must start with a `[system]` line".into()))?;
        let (system, user) =
            rest.split_once("\n[user]\n").ok_or_else(|| err("missing `[user]` section".into()))?;
        let system = system.trim_end().to_string();
        let user = user.trim_end().to_string();

        let placeholders = scan_placeholders(&format!("{system}\n{user}")).map_err(err)?;
        let found: BTreeSet<&str> = placeholders.iter().map(String::as_str).collect();
        let declared: BTreeSet<&str> = key.placeholders().iter().copied().collect();
        if found != declared {
            return Err(err(format!("placeholders {found:?} do not match the contract {declared:?}")));
        }

        let example_count = body.lines().filter(|l| l.starts_with("### Example")).count();
        if !key.required_examples().contains(&example_count) {
            return Err(err(format!("has {example_count} examples, expected {:?}", key.required_examples())));
        }

        Ok(PromptTemplate {
            key,
            body_hash: sha256_hex(body.as_bytes()),
            body,
            system,
            user,
            placeholders,
            example_count,
        })
    }
}

/// A rendered prompt ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub key: PromptKey,
    pub system: String,
    pub user: String,
    pub fingerprint: String,
    pub bindings: BTreeMap<String, String>,
}

impl PromptInstance {
    /// System and user sections joined, for display and size estimates.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    /// The fingerprint of the `attempt`-th corrective re-ask of this prompt.
    pub fn retry_fingerprint(&self, attempt: u32) -> String {
        sha256_hex(format!("{}:retry{attempt}", self.fingerprint).as_bytes())
    }
}

fn substitute(text: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").expect("placeholders validated at load");
        out.push_str(&bindings[&after[..close]]);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<PromptKey, PromptTemplate>,
}

impl PromptRegistry {
    /// The templates compiled into the crate.
    pub fn builtin() -> &'static PromptRegistry {
        static REGISTRY: OnceLock<PromptRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            PromptRegistry::from_sources(|k| Ok(k.builtin_asset().to_string())).expect("shipped prompt assets are valid")
        })
    }

    /// Loads `<Key>.prompt.txt` for every key from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::from_sources(|k| {
            let path = dir.join(format!("{k}.prompt.txt"));
            std::fs::read_to_string(&path)
                .map_err(|e| PromptError::Template { key: k.to_string(), message: format!("{}: {e}", path.display()) })
        })
    }

    /// Builds a registry, failing if any key lacks a valid template.
    pub fn from_sources(mut source: impl FnMut(PromptKey) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for &key in PromptKey::ALL {
            templates.insert(key, PromptTemplate::parse(key, &source(key)?)?);
        }
        Ok(PromptRegistry { templates })
    }

    pub fn get_template(&self, key: PromptKey) -> &PromptTemplate {
        &self.templates[&key]
    }

    pub fn get_template_by_name(&self, name: &str) -> Result<&PromptTemplate, PromptError> {
        Ok(self.get_template(name.parse()?))
    }

    pub fn render(&self, key: PromptKey, bindings: &BTreeMap<String, String>) -> Result<PromptInstance, PromptError> {
        let template = self.get_template(key);
        for p in key.placeholders() {
            if !bindings.contains_key(*p) {
                return Err(PromptError::MissingPlaceholder(p.to_string()));
            }
        }
        if let Some(extra) = bindings.keys().find(|b| !key.placeholders().contains(&b.as_str())) {
            return Err(PromptError::UnexpectedBinding(extra.clone()));
        }
        let fingerprint_input = serde_json::json!({
            "key": key.as_str(),
            "template": template.body_hash,
            "bindings": bindings,
        });
        Ok(PromptInstance {
            key,
            system: substitute(&template.system, bindings),
            user: substitute(&template.user, bindings),
            fingerprint: sha256_hex(crate::ir::canonical_json(&fingerprint_input).as_bytes()),
            bindings: bindings.clone(),
        })
    }
}

/// Convenience for building binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_assets_load_with_contracts() {
        let reg = PromptRegistry::builtin();
        assert_eq!(reg.get_template(PromptKey::Master).example_count, 4);
        assert_eq!(reg.get_template(PromptKey::ExpertLoop).example_count, 2);
        for &k in PromptKey::ALL {
            let t = reg.get_template(k);
            let mut found = t.placeholders.clone();
            found.sort();
            let mut declared: Vec<String> = k.placeholders().iter().map(|s| s.to_string()).collect();
            declared.sort();
            assert_eq!(found, declared, "{k}");
        }
    }

    #[test]
    fn unknown_key() {
        assert_eq!(
            PromptRegistry::builtin().get_template_by_name("Poetry").unwrap_err(),
            PromptError::UnknownKey("Poetry".into())
        );
    }

    #[test]
    fn render_substitutes_once_and_fingerprints() {
        let reg = PromptRegistry::builtin();
        let request = "Read the first five emails in my inbox. {{request}} stays literal".to_string();
        let b = bindings([("request", request.clone())]);
        let a = reg.render(PromptKey::Screening, &b).unwrap();
        assert!(a.user.contains(&request));
        assert_eq!(a.fingerprint, reg.render(PromptKey::Screening, &b).unwrap().fingerprint);
        let other = reg.render(PromptKey::Screening, &bindings([("request", "x".into())])).unwrap();
        assert_ne!(a.fingerprint, other.fingerprint);
        assert_ne!(a.fingerprint, a.retry_fingerprint(1));
        assert_eq!(a.fingerprint.len(), 64);
    }

    #[test]
    fn missing_and_unexpected_bindings() {
        let reg = PromptRegistry::builtin();
        assert_eq!(
            reg.render(PromptKey::Master, &bindings([("process", "{}".into())])).unwrap_err(),
            PromptError::MissingPlaceholder("request".into())
        );
        let b = bindings([("request", "r".into()), ("extra", "e".into())]);
        assert_eq!(reg.render(PromptKey::Screening, &b).unwrap_err(), PromptError::UnexpectedBinding("extra".into()));
    }

    #[test]
    fn contract_violations_fail_fast() {
        let bad = "[system]\nYou screen requests.\n[user]\nRequest: {{request}} {{surprise}}\n";
        assert!(matches!(PromptTemplate::parse(PromptKey::Screening, bad), Err(PromptError::Template { .. })));
        let no_user = "[system]\n{{request}}\n";
        assert!(PromptTemplate::parse(PromptKey::Screening, no_user).is_err());
        let too_many = "[system]\n### Example 1\n### Example 2\n[user]\n{{request}}\n";
        assert!(PromptTemplate::parse(PromptKey::Screening, too_many).is_err());
    }

    #[test]
    fn template_edit_changes_fingerprint() {
        let b = bindings([("request", "r".into())]);
        let stock = PromptRegistry::builtin().render(PromptKey::Screening, &b).unwrap();
        let edited = PromptRegistry::from_sources(|k| {
            let body = k.builtin_asset().to_string();
            Ok(if k == PromptKey::Screening { body.replace("[user]\n", "[user]\nPlease.\n") } else { body })
        })
        .unwrap();
        assert_ne!(edited.render(PromptKey::Screening, &b).unwrap().fingerprint, stock.fingerprint);
    }
}
