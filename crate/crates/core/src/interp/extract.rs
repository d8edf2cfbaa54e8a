use std::collections::BTreeMap;

use regex::Regex;
use serde_json::Value;

use crate::ir::Extraction;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extracted {
    /// Output variable -> value; `null` when the field was not found.
    pub values: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("extractor unavailable: {0}")]
pub struct ExtractorUnavailable(pub String);

/// Pulls named fields out of free text.
pub trait Extractor: Send + Sync {
    fn extract(&self, source: &str, extractions: &[Extraction]) -> Result<Extracted, ExtractorUnavailable>;
}

/// Pattern-table extractor.
///
/// A hint `regex:<pattern>` takes the first capture group (or the whole
/// match) of the first match. Any other hint, or the field name when the hint
/// is empty, is a label: the value is the rest of the first line that starts
/// with `<label>:`, compared case-insensitively.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleExtractor;

fn by_label(source: &str, label: &str) -> Option<String> {
    let label = label.trim().to_lowercase();
    source.lines().find_map(|line| {
        let (head, rest) = line.trim_start().split_once(':')?;
        (head.trim().to_lowercase() == label).then(|| rest.trim().to_string())
    })
}

fn by_regex(source: &str, pattern: &str) -> Result<Option<String>, String> {
    let re = Regex::new(pattern).map_err(|e| e.to_string())?;
    Ok(re.captures(source).map(|c| c.get(1).or_else(|| c.get(0)).map_or("", |m| m.as_str()).trim().to_string()))
}

impl Extractor for RuleExtractor {
    fn extract(&self, source: &str, extractions: &[Extraction]) -> Result<Extracted, ExtractorUnavailable> {
        let mut out = Extracted::default();
        for ex in extractions {
            let found = match ex.hint.strip_prefix("regex:") {
                Some(pattern) => match by_regex(source, pattern) {
                    Ok(v) => v,
                    Err(e) => {
                        out.warnings.push(format!("{}: bad pattern: {e}", ex.field));
                        None
                    }
                },
                None => by_label(source, if ex.hint.trim().is_empty() { &ex.field } else { &ex.hint }),
            };
            let value = match found.filter(|v| !v.is_empty()) {
                Some(v) => Value::String(v),
                None => {
                    out.warnings.push(format!("`{}` not found in the source text", ex.field));
                    Value::Null
                }
            };
            out.values.insert(ex.output_variable.clone(), value);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(field: &str, var: &str, hint: &str) -> Extraction {
        Extraction { field: field.into(), output_variable: var.into(), hint: hint.into() }
    }

    #[test]
    fn labels_and_patterns() {
        let text = "Patient: Jane Roe\nPrescribing doctor: Dr. Smith\nDate: 2020-03-01\nRx MEDEX 20mg";
        let got = RuleExtractor
            .extract(
                text,
                &[
                    ex("Patient name", "patient", "Patient"),
                    ex("Doctor", "doctor", "prescribing DOCTOR"),
                    ex("Medication", "med", r"regex:Rx\s+(\w+)"),
                    ex("Date", "date", ""),
                ],
            )
            .unwrap();
        assert_eq!(got.values["patient"], "Jane Roe");
        assert_eq!(got.values["doctor"], "Dr. Smith");
        assert_eq!(got.values["med"], "MEDEX");
        assert_eq!(got.values["date"], "2020-03-01");
        assert!(got.warnings.is_empty());
    }

    #[test]
    fn empty_inputs() {
        let got = RuleExtractor.extract("", &[ex("A", "a", "A"), ex("B", "b", "B")]).unwrap();
        assert_eq!(got.values.values().filter(|v| v.is_null()).count(), 2);
        assert_eq!(got.warnings.len(), 2);
        assert!(RuleExtractor.extract("A: 1", &[]).unwrap().values.is_empty());
    }
}
