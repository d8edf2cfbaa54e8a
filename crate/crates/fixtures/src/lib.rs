//! The synthetic desk dataset and everything derived from it.
//!
//! The six samples under `fixtures/dataset` are written by hand. This crate
//! derives the rest of the fixture tree from them: canonical goldens, the
//! labelled validator mutants, mock tool seeds, per-sample checkpoint
//! decisions and the replay stores recorded by driving every experiment
//! configuration against [`GoldResponder`], a scripted model that answers
//! each prompt layer from the gold workflows.
//!
//! The responder is deliberately imperfect in a fixed, documented way so the
//! configurations differ on the hard tier:
//!
//! - `hard-1` is under-specified. Its skeleton omits the folder check unless
//!   the request carries [`HARD_1_CLARIFICATION`], which screening asks for.
//! - `hard-2` always gets a skeleton without its try/catch guard; the
//!   feedback loop's edit restores it.
//! - The single-prompt baselines return a per-model variant of each gold
//!   with one planted defect (see [`baseline_variant`]).

mod mutants;
mod responder;
mod seeds;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _};
use flowsmith_core::eval::{load_dataset, DatasetSample, ExperimentConfig};
use flowsmith_core::ir::parse::workflow_from_value;
use flowsmith_core::ir::serialize::{serialize_canonical, workflow_to_value};
use flowsmith_core::ir::Workflow;
use flowsmith_core::llm::{LlmClient, ReplayStore, ScriptedBackend};
use flowsmith_core::pipeline::{run_unattended, FeedbackDecision, Pipeline, PipelineConfig, Script};
use serde_json::{json, Value};

pub use mutants::{compose, mutants, Mutant, MutantClass, MutantLabel};
pub use responder::{GoldResponder, Strip};
pub use seeds::{fs_files, mailbox_seed, spreadsheet_seed};

/// Text appended to the `hard-1` request when the user answers screening.
pub const HARD_1_CLARIFICATION: &str = " Read each document to find the client name on its `Client:` line, \
and create the client's folder first when it does not exist yet.";

/// Follow-up questions screening raises for the unclarified `hard-1` request.
pub const HARD_1_FOLLOW_UPS: [&str; 2] = [
    "How is the client of a document identified?",
    "Should a missing client folder be created, or should the document be skipped?",
];

/// The edit the feedback loop sends for `hard-2`.
pub const HARD_2_EDIT: &str = "Wrap the whole run in a try block. If anything fails, catch the error and \
email it to finance@acme.test with the subject 'Invoice reminders failed'.";

/// Model names of the two single-prompt baselines.
pub const BASELINE_MODEL_OLD: &str = "gpt-3.5-turbo-0125";

/// Name of the replay directory for the missing-parameter scenario.
pub const MISSING_PARAMS_SCENARIO: &str = "missing-params";

/// The sample, step and parameters the missing-parameter scenario strips.
pub fn missing_params_strip() -> Strip {
    Strip { sample_id: "easy-2".into(), step_id: "step-2".into(), parameters: vec!["to".into(), "body".into()] }
}

/// The repository's `fixtures/` directory.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn dataset_dir(root: &Path) -> PathBuf {
    root.join("dataset")
}

pub fn replay_dir(root: &Path, config: &str) -> PathBuf {
    root.join("replay").join(config)
}

pub fn load_samples(root: &Path) -> anyhow::Result<Vec<DatasetSample>> {
    let samples = load_dataset(&dataset_dir(root))?;
    if samples.is_empty() {
        bail!("no samples under {}", dataset_dir(root).display());
    }
    Ok(samples)
}

fn edit_workflow(w: &Workflow, f: impl FnOnce(&mut Value)) -> Workflow {
    let mut v = workflow_to_value(w);
    f(&mut v);
    workflow_from_value(&v).expect("fixture edits keep the document parseable")
}

/// Mutable access to the step with `id` in a workflow document.
pub(crate) fn step_mut<'v>(doc: &'v mut Value, id: &str) -> &'v mut Value {
    doc["steps"]
        .as_array_mut()
        .and_then(|steps| steps.iter_mut().find(|s| s["id"] == id))
        .unwrap_or_else(|| panic!("fixture step {id} exists"))
}

fn remove_steps(doc: &mut Value, ids: &[&str]) {
    doc["steps"].as_array_mut().expect("steps array").retain(|s| !ids.iter().any(|id| s["id"] == *id));
}

/// `hard-1` as built from the unclarified request: no folder check.
pub fn hard_1_unclarified(gold: &Workflow) -> Workflow {
    edit_workflow(gold, |doc| {
        remove_steps(doc, &["step-5", "step-6"]);
        step_mut(doc, "step-4")["nextStepId"] = json!("step-7");
    })
}

/// `hard-2` without the try/catch guard around the run.
pub fn hard_2_unguarded(gold: &Workflow) -> Workflow {
    edit_workflow(gold, |doc| {
        remove_steps(doc, &["step-1", "step-6", "step-7"]);
        doc["defaultStartStepId"] = json!("step-2");
    })
}

/// The workflow the layered pipeline builds its skeleton towards.
pub fn skeleton_target(sample: &DatasetSample, clarified: bool) -> Workflow {
    match sample.id.as_str() {
        "hard-1" if !clarified => hard_1_unclarified(&sample.gold),
        "hard-2" => hard_2_unguarded(&sample.gold),
        _ => sample.gold.clone(),
    }
}

/// What a single-prompt baseline returns for a sample.
///
/// The older model gets the hard tier and several parameter details wrong;
/// the newer one makes fewer, milder mistakes. Both miss the `hard-2` guard.
pub fn baseline_variant(sample: &DatasetSample, model: &str) -> Workflow {
    let gold = &sample.gold;
    let old = model == BASELINE_MODEL_OLD;
    match (sample.id.as_str(), old) {
        ("easy-2", true) => edit_workflow(gold, |doc| {
            step_mut(doc, "step-2")["parameters"]["body"] = json!("summary");
        }),
        ("medium-1", true) => edit_workflow(gold, |doc| {
            step_mut(doc, "step-2")["sourceVariable"] = json!("prescription_file");
        }),
        ("medium-2", true) => edit_workflow(gold, |doc| {
            remove_steps(doc, &["step-2"]);
            step_mut(doc, "step-1")["nextStepId"] = json!("step-3");
        }),
        ("medium-2", false) => edit_workflow(gold, |doc| {
            step_mut(doc, "step-5")["parameters"]["column"] = json!("Bonus");
        }),
        ("hard-1", true) => edit_workflow(gold, |doc| {
            step_mut(doc, "step-5")["function"] = json!("CheckFolder");
        }),
        ("hard-1", false) => edit_workflow(gold, |doc| {
            step_mut(doc, "step-7")["function"] = json!("WriteFile");
        }),
        ("hard-2", _) => hard_2_unguarded(gold),
        _ => gold.clone(),
    }
}

/// The checkpoint decisions an unattended run uses for a sample.
pub fn decisions(sample: &DatasetSample) -> Script {
    match sample.id.as_str() {
        "hard-1" => Script { screening_rewrite: Some(format!("{}{HARD_1_CLARIFICATION}", sample.request)), ..Script::default() },
        "hard-2" => Script { feedback: vec![FeedbackDecision::Edit(HARD_2_EDIT.into())], ..Script::default() },
        _ => Script::default(),
    }
}

pub fn decisions_by_sample(samples: &[DatasetSample]) -> BTreeMap<String, Script> {
    samples.iter().map(|s| (s.id.clone(), decisions(s))).collect()
}

/// Drives one sample through one configuration against the gold responder
/// and returns the calls it made as a replay store.
pub fn record_sample(
    samples: &[DatasetSample],
    sample: &DatasetSample,
    config: &PipelineConfig,
    strip: Option<Strip>,
) -> anyhow::Result<ReplayStore> {
    let mut responder = GoldResponder::new(samples.to_vec());
    if let Some(strip) = strip {
        responder = responder.with_strip(strip);
    }
    let client = LlmClient::new(Arc::new(ScriptedBackend::new(responder))).with_model(&config.model);
    let pipeline = Pipeline::new(client);
    let mut session = pipeline.start_session(&sample.request, config.clone())?;
    run_unattended(&pipeline, &mut session, &decisions(sample))
        .with_context(|| format!("recording {} under {config:?}", sample.id))?;
    Ok(ReplayStore::from_calls(&pipeline.client().log().snapshot()))
}

/// Every file of the generated fixture tree, as relative path and content.
///
/// The dataset itself is an input and is not part of the output.
pub fn render_tree(samples: &[DatasetSample]) -> anyhow::Result<BTreeMap<PathBuf, String>> {
    let mut files = BTreeMap::new();
    let mut put = |path: PathBuf, text: String| {
        files.insert(path, text);
    };
    for s in samples {
        put(Path::new("goldens").join(format!("{}.json", s.id)), serialize_canonical(&s.gold));
        put(Path::new("requests").join(format!("{}.txt", s.id)), format!("{}\n", s.request));
        put(
            Path::new("decisions").join(format!("{}.decisions.json", s.id)),
            serde_json::to_string_pretty(&decisions(s))? + "\n",
        );
    }
    for config in ExperimentConfig::standard_set() {
        for s in samples {
            let store = record_sample(samples, s, &config.pipeline, None)?;
            put(Path::new("replay").join(&config.name).join(format!("{}.replay.json", s.id)), store.to_json());
        }
    }
    let strip = missing_params_strip();
    let target = samples.iter().find(|s| s.id == strip.sample_id).context("missing-parameter sample")?;
    let store = record_sample(samples, target, &PipelineConfig::full(), Some(strip.clone()))?;
    put(
        Path::new("replay").join(MISSING_PARAMS_SCENARIO).join(format!("{}.replay.json", target.id)),
        store.to_json(),
    );
    put(
        Path::new("scenarios").join(format!("{MISSING_PARAMS_SCENARIO}.json")),
        serialize_canonical(&strip.apply(&target.gold)),
    );
    for m in mutants(samples) {
        put(Path::new("mutants").join(format!("{}.mutant.json", m.id)), serialize_canonical(&m.workflow));
        put(Path::new("mutants").join(format!("{}.label", m.id)), serde_json::to_string_pretty(&m.label())? + "\n");
    }
    put(PathBuf::from("seeds/mailbox.json"), serde_json::to_string_pretty(&mailbox_seed())? + "\n");
    put(PathBuf::from("seeds/sheets.json"), serde_json::to_string_pretty(&spreadsheet_seed())? + "\n");
    for (path, text) in fs_files() {
        put(Path::new("seeds/fsroot").join(path), text.to_string());
    }
    Ok(files)
}

/// Writes the generated tree under `root`, replacing earlier output.
pub fn generate(root: &Path) -> anyhow::Result<usize> {
    let samples = load_samples(root)?;
    let files = render_tree(&samples)?;
    for dir in ["goldens", "requests", "decisions", "replay", "scenarios", "mutants", "seeds"] {
        let dir = root.join(dir);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
    }
    for (rel, text) in &files {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().expect("relative paths have a parent"))?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(files.len())
}
