//! Labelled single-defect mutants of the gold workflows.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use flowsmith_core::eval::{Bucket, DatasetSample};
use flowsmith_core::ir::parse::workflow_from_value;
use flowsmith_core::ir::serialize::workflow_to_value;
use flowsmith_core::ir::Workflow;

use crate::step_mut;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutantClass {
    DanglingId,
    Unreachable,
    UseBeforeDef,
    ExtractSource,
    MissingEssential,
    ExtraKey,
}

impl MutantClass {
    pub const ALL: [MutantClass; 6] = [
        MutantClass::DanglingId,
        MutantClass::Unreachable,
        MutantClass::UseBeforeDef,
        MutantClass::ExtractSource,
        MutantClass::MissingEssential,
        MutantClass::ExtraKey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutantClass::DanglingId => "dangling-id",
            MutantClass::Unreachable => "unreachable",
            MutantClass::UseBeforeDef => "use-before-def",
            MutantClass::ExtractSource => "extract-source",
            MutantClass::MissingEssential => "missing-essential",
            MutantClass::ExtraKey => "extra-key",
        }
    }

    /// The validator rule that must report this defect.
    pub fn rule(self) -> &'static str {
        match self {
            MutantClass::DanglingId => "graph/dangling-id",
            MutantClass::Unreachable => "graph/unreachable",
            MutantClass::UseBeforeDef => "context/use-before-def",
            MutantClass::ExtractSource => "context/extract-source",
            MutantClass::MissingEssential => "essential/missing",
            MutantClass::ExtraKey => "structure/extra-key",
        }
    }

    /// The rubric bucket the structural scorer gives a mutant of this class
    /// against its gold. Flow defects are structural, parameter-level
    /// defects minor, and invented keys severe.
    pub fn expected_bucket(self) -> Bucket {
        match self {
            MutantClass::DanglingId | MutantClass::Unreachable | MutantClass::ExtractSource => Bucket::STRUCTURAL,
            MutantClass::UseBeforeDef | MutantClass::MissingEssential => Bucket::MINOR,
            MutantClass::ExtraKey => Bucket::SEVERE,
        }
    }
}

impl fmt::Display for MutantClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The `.label` file shipped next to each mutant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MutantLabel {
    pub class: MutantClass,
    pub rule: String,
    pub sample: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub id: String,
    pub sample_id: String,
    pub class: MutantClass,
    pub workflow: Workflow,
}

impl Mutant {
    pub fn label(&self) -> MutantLabel {
        MutantLabel { class: self.class, rule: self.class.rule().to_string(), sample: self.sample_id.clone() }
    }
}

type Edit = fn(&mut Value);

const TABLE: &[(MutantClass, &str, Edit)] = &[
    (MutantClass::DanglingId, "easy-2", |d| step_mut(d, "step-1")["nextStepId"] = json!("step-9")),
    (MutantClass::DanglingId, "medium-1", |d| step_mut(d, "step-3")["trueStepId"] = json!("step-9")),
    (MutantClass::DanglingId, "medium-2", |d| step_mut(d, "step-2")["bodyStartStepId"] = json!("step-9")),
    (MutantClass::DanglingId, "hard-2", |d| step_mut(d, "step-1")["catchStepId"] = json!("step-9")),
    (MutantClass::Unreachable, "easy-2", |d| step_mut(d, "step-1")["nextStepId"] = Value::Null),
    (MutantClass::Unreachable, "medium-1", |d| step_mut(d, "step-3")["falseStepId"] = json!("step-4")),
    (MutantClass::Unreachable, "hard-1", |d| step_mut(d, "step-6")["trueStepId"] = json!("step-8")),
    (MutantClass::UseBeforeDef, "easy-2", |d| {
        step_mut(d, "step-1")["parameters"]["path"] = json!("reports/${summary}.txt")
    }),
    (MutantClass::UseBeforeDef, "medium-1", |d| {
        step_mut(d, "step-1")["parameters"]["path"] = json!("user/Downloads/Medical/${doctor}.txt")
    }),
    (MutantClass::UseBeforeDef, "hard-1", |d| step_mut(d, "step-3")["parameters"]["path"] = json!("${client}")),
    (MutantClass::ExtractSource, "medium-1", |d| step_mut(d, "step-2")["sourceVariable"] = json!("prescription")),
    (MutantClass::ExtractSource, "hard-1", |d| step_mut(d, "step-4")["sourceVariable"] = json!("files")),
    (MutantClass::ExtractSource, "hard-1", |d| step_mut(d, "step-4")["sourceVariable"] = json!("folder_exists")),
    (MutantClass::MissingEssential, "easy-1", |d| remove_param(d, "step-1", "folder")),
    (MutantClass::MissingEssential, "easy-2", |d| remove_param(d, "step-2", "to")),
    (MutantClass::MissingEssential, "medium-2", |d| remove_param(d, "step-5", "column")),
    (MutantClass::MissingEssential, "hard-1", |d| remove_param(d, "step-8", "destination")),
    (MutantClass::ExtraKey, "easy-1", |d| step_mut(d, "step-1")["retries"] = json!(3)),
    (MutantClass::ExtraKey, "medium-2", |d| step_mut(d, "step-3")["unit"] = json!("USD")),
    (MutantClass::ExtraKey, "hard-2", |d| step_mut(d, "step-4")["timeout"] = json!(30)),
];

fn remove_param(doc: &mut Value, step: &str, name: &str) {
    step_mut(doc, step)["parameters"].as_object_mut().expect("API step parameters").remove(name);
}

/// Table rows with their mutant ids, numbered within their class.
fn numbered() -> Vec<(String, MutantClass, &'static str, Edit)> {
    let mut out: Vec<(String, MutantClass, &'static str, Edit)> = Vec::new();
    for &(class, sample_id, edit) in TABLE {
        let n = out.iter().filter(|(_, c, _, _)| *c == class).count() + 1;
        out.push((format!("{class}-{n}"), class, sample_id, edit));
    }
    out
}

fn sample<'a>(samples: &'a [DatasetSample], id: &str) -> &'a DatasetSample {
    samples.iter().find(|s| s.id == id).unwrap_or_else(|| panic!("sample {id} exists"))
}

/// The twenty mutants (`dangling-id-1`, ...).
pub fn mutants(samples: &[DatasetSample]) -> Vec<Mutant> {
    numbered()
        .into_iter()
        .map(|(id, class, sample_id, edit)| {
            let mut doc = workflow_to_value(&sample(samples, sample_id).gold);
            edit(&mut doc);
            Mutant {
                id,
                sample_id: sample_id.to_string(),
                class,
                workflow: workflow_from_value(&doc).expect("mutants stay parseable"),
            }
        })
        .collect()
}

/// Applies several mutations of one sample to its gold, in table order.
///
/// Returns `None` when the ids are unknown or belong to different samples.
/// An empty id list yields the gold itself.
pub fn compose(samples: &[DatasetSample], sample_id: &str, ids: &[&str]) -> Option<Workflow> {
    let table = numbered();
    if ids.iter().any(|id| !table.iter().any(|(t, _, s, _)| t == id && *s == sample_id)) {
        return None;
    }
    let mut doc = workflow_to_value(&samples.iter().find(|s| s.id == sample_id)?.gold);
    for (_, _, _, edit) in table.iter().filter(|(t, ..)| ids.contains(&t.as_str())) {
        edit(&mut doc);
    }
    Some(workflow_from_value(&doc).expect("mutants stay parseable"))
}
