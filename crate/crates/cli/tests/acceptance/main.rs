//! Acceptance suite: one pass/fail line per criterion, with pinned budgets.
//!
//! Runs without the libtest harness so the report reads top to bottom; the
//! process fails when any criterion fails.

mod graphs;
mod programs;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use flowsmith_core::eval::{
    run_experiment, score_structural, Bucket, DatasetSample, Difficulty, ExperimentConfig, ExperimentReport,
};
use flowsmith_core::interp::mocks::{MailboxSeed, MockMailbox, MockSpreadsheet, SpreadsheetSeed};
use flowsmith_core::interp::{Adapters, ExecStatus, Interpreter};
use flowsmith_core::ir::{parse_workflow, serialize_canonical, Workflow};
use flowsmith_core::llm::{load_replay, ChatBackend, LlmClient, ReplayBackend, ReplayStore, ScriptedBackend};
use flowsmith_core::pipeline::{
    run_unattended, Answer, FeedbackDecision, FeedbackOutcome, Pipeline, PipelineConfig, PipelineSession, Script, Stage,
};
use flowsmith_core::prompts::PromptKey;
use flowsmith_core::validate::{find_missing_essentials, validate_all, validate_graph, EssentialCatalog};
use flowsmith_fixtures::{compose, fixtures_dir, load_samples, mutants, GoldResponder, MutantClass};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn samples() -> Vec<DatasetSample> {
    load_samples(&fixtures_dir()).expect("the desk dataset loads")
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn read_dir_sorted(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    files.sort();
    files
}

fn replay_store(config: &str) -> ReplayStore {
    let mut store = ReplayStore::default();
    for f in read_dir_sorted(&fixtures_dir().join("replay").join(config), ".replay.json") {
        store.merge(load_replay(&f).expect("replay file loads"));
    }
    store
}

fn decisions() -> BTreeMap<String, Script> {
    read_dir_sorted(&fixtures_dir().join("decisions"), ".decisions.json")
        .into_iter()
        .map(|p| {
            let id = p.file_name().unwrap().to_string_lossy().trim_end_matches(".decisions.json").to_string();
            (id, serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).expect("decisions parse"))
        })
        .collect()
}

// ---- 1 ---------------------------------------------------------------------

fn round_trip() -> Outcome {
    let mut files = read_dir_sorted(&fixtures_dir().join("goldens"), ".json");
    files.extend(read_dir_sorted(&fixtures_dir().join("mutants"), ".mutant.json"));
    check(files.len() >= 12, || format!("only {} fixtures", files.len()))?;
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let w = parse_workflow(&text).map_err(|e| format!("{}: {e}", f.display()))?;
        let once = serialize_canonical(&w);
        let back = parse_workflow(&once).map_err(|e| format!("{}: reparse: {e}", f.display()))?;
        check(back == w, || format!("{}: parse(serialize(w)) != w", f.display()))?;
        check(serialize_canonical(&back) == once, || format!("{}: serialization not byte-stable", f.display()))?;
        check(once == text, || format!("{}: shipped bytes are not canonical", f.display()))?;
    }
    Ok(format!("{} fixtures", files.len()))
}

// ---- 2 ---------------------------------------------------------------------

fn unreachable_reported(shapes: &[graphs::Shape]) -> BTreeSet<usize> {
    let w = graphs::build(shapes);
    validate_graph(&w)
        .into_iter()
        .filter(|d| d.rule == "graph/unreachable")
        .map(|d| w.step_index(d.step_id.as_deref().unwrap()).unwrap())
        .collect()
}

fn mutant_suite() -> Outcome {
    let samples = samples();
    for s in &samples {
        let errors: Vec<String> = validate_all(&s.gold).into_iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect();
        check(errors.is_empty(), || format!("gold {} has error findings: {errors:?}", s.id))?;
    }
    let ms = mutants(&samples);
    let classes: BTreeSet<&str> = ms.iter().map(|m| m.class.as_str()).collect();
    check(ms.len() == 20 && classes.len() == 6, || format!("{} mutants over {} classes", ms.len(), classes.len()))?;
    for m in &ms {
        let label: Value = serde_json::from_str(
            &std::fs::read_to_string(fixtures_dir().join(format!("mutants/{}.label", m.id))).unwrap(),
        )
        .unwrap();
        let rule = label["rule"].as_str().unwrap();
        let hit = validate_all(&m.workflow).iter().any(|d| d.is_error() && d.rule == rule);
        check(hit, || format!("{} not detected as {rule}", m.id))?;
    }

    let mut graphs_checked = 0usize;
    let mut compare = |shapes: &[graphs::Shape]| -> Result<(), String> {
        graphs_checked += 1;
        let (expected, got) = (graphs::unreachable_oracle(shapes), unreachable_reported(shapes));
        check(expected == got, || format!("{shapes:?}: oracle {expected:?}, validator {got:?}"))
    };
    let mut failure = None;
    for n in 1..=3 {
        graphs::for_each_graph(n, false, |g| {
            if failure.is_none() {
                failure = compare(g).err();
            }
        });
    }
    for n in 4..=5 {
        graphs::for_each_graph(n, true, |g| {
            if failure.is_none() {
                failure = compare(g).err();
            }
        });
    }
    if let Some(f) = failure {
        return Err(f);
    }
    runner(3000)
        .run(&graphs::random_graph(4..=10), |g| {
            let (expected, got) = (graphs::unreachable_oracle(&g), unreachable_reported(&g));
            proptest::prop_assert_eq!(expected, got);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("20 mutants detected, 6 golds clean, {} exhaustive + 3000 random graphs", graphs_checked))
}

// ---- 3 ---------------------------------------------------------------------

fn tokens_from_stderr(stderr: &str) -> Option<(u64, u64)> {
    let line = stderr.lines().find(|l| l.starts_with("stage "))?;
    let inside = line.split('(').nth(1)?;
    let mut numbers = inside.split(|c: char| !c.is_ascii_digit()).filter(|s| !s.is_empty());
    Some((numbers.next()?.parse().ok()?, numbers.next()?.parse().ok()?))
}

fn replay_synthesis() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut slowest = Duration::ZERO;
    for id in ["easy-1", "easy-2", "medium-1", "medium-2"] {
        let store_path = fixtures_dir().join(format!("replay/full/{id}.replay.json"));
        let out = dir.path().join(format!("{id}.json"));
        let started = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_flowsmith"))
            .arg("synthesize")
            .arg("--request")
            .arg(fixtures_dir().join(format!("requests/{id}.txt")))
            .arg("--backend")
            .arg(format!("scripted:{}", store_path.display()))
            .args(["--feedback", "approve", "--out"])
            .arg(&out)
            .stdin(Stdio::null())
            .output()
            .unwrap();
        let took = started.elapsed();
        slowest = slowest.max(took);
        let stderr = String::from_utf8_lossy(&o.stderr);
        check(o.status.success(), || format!("{id}: exit {:?}: {stderr}", o.status.code()))?;
        check(took < Duration::from_secs(5), || format!("{id}: {took:?} over the 5 s budget"))?;
        let golden = std::fs::read(fixtures_dir().join(format!("goldens/{id}.json"))).unwrap();
        check(std::fs::read(&out).unwrap() == golden, || format!("{id}: output differs from the golden"))?;

        let store = load_replay(&store_path).unwrap();
        let sums = store.total_usage();
        let printed = tokens_from_stderr(&stderr).ok_or_else(|| format!("{id}: no token line in {stderr}"))?;
        check(printed == (sums.input_tokens, sums.completion_tokens), || {
            format!("{id}: CLI ledger {printed:?} vs store {sums:?}")
        })?;
        let pipeline = Pipeline::new(LlmClient::new(Arc::new(ReplayBackend::new(store))));
        let mut s = pipeline.start_session(std::fs::read_to_string(fixtures_dir().join(format!("requests/{id}.txt"))).unwrap().trim_end(), PipelineConfig::full()).unwrap();
        run_unattended(&pipeline, &mut s, &Script::default()).map_err(|e| e.to_string())?;
        check(s.total_usage() == sums, || format!("{id}: session ledger {:?} vs store {sums:?}", s.total_usage()))?;
    }
    Ok(format!("4 samples byte-identical, ledgers exact, slowest {:.2} s", slowest.as_secs_f64()))
}

// ---- 4 ---------------------------------------------------------------------

fn scripted(samples: &[DatasetSample]) -> (Arc<ScriptedBackend<GoldResponder>>, Pipeline) {
    let backend = Arc::new(ScriptedBackend::new(GoldResponder::new(samples.to_vec())));
    let dyn_backend: Arc<dyn ChatBackend> = backend.clone();
    (backend, Pipeline::new(LlmClient::new(dyn_backend)))
}

fn feedback_protocol() -> Outcome {
    let samples = samples();
    let (backend, p) = scripted(&samples);
    let request = &samples.iter().find(|s| s.id == "easy-1").unwrap().request;
    let mut s = p.start_session(request, PipelineConfig::full()).unwrap();
    flowsmith_core::pipeline::advance(&p, &mut s).unwrap();
    check(s.stage == Stage::AwaitFeedback, || format!("expected AwaitFeedback, got {}", s.stage))?;
    for round in 1..=3 {
        let outcome = p.apply_feedback(&mut s, FeedbackDecision::Edit(format!("edit number {round}"))).unwrap();
        let expected = if round <= 2 { FeedbackOutcome::Revised } else { FeedbackOutcome::LoopLimitReached };
        check(outcome == expected, || format!("edit {round}: {outcome:?}, expected {expected:?}"))?;
        flowsmith_core::pipeline::advance(&p, &mut s).unwrap();
        check(s.stage == Stage::AwaitFeedback, || format!("after edit {round}: stage {}", s.stage))?;
    }
    check(s.feedback_rounds == 2, || format!("{} rounds counted", s.feedback_rounds))?;
    check(backend.count(PromptKey::Modification) == 2, || "a refused edit still called the model".into())?;
    p.apply_feedback(&mut s, FeedbackDecision::Approve).unwrap();
    run_unattended(&p, &mut s, &Script::default()).unwrap();
    check(s.stage == Stage::Finalized, || format!("approval led to {}", s.stage))?;

    let mut counts = Vec::new();
    for (name, config) in [
        ("nua", PipelineConfig::nua()),
        ("gc", PipelineConfig::gc()),
        ("hfl", PipelineConfig::hfl()),
        ("full", PipelineConfig::full()),
    ] {
        let (backend, p) = scripted(&samples);
        for sample in &samples {
            let mut s = p.start_session(&sample.request, config.clone()).unwrap();
            run_unattended(&p, &mut s, &Script::default()).map_err(|e| format!("{name} {}: {e}", sample.id))?;
        }
        let (screening, summary) = (backend.count(PromptKey::Screening), backend.count(PromptKey::Summary));
        let (want_screening, want_summary) = (config.enable_screening, config.enable_feedback_loop);
        check((screening > 0) == want_screening && (summary > 0) == want_summary, || {
            format!("{name}: Screening {screening}, Summary {summary}")
        })?;
        counts.push(format!("{name} {screening}/{summary}"));
    }
    Ok(format!("2 edits revised, 3rd refused; Screening/Summary counts: {}", counts.join(", ")))
}

// ---- 5 ---------------------------------------------------------------------

fn missing_parameters() -> Outcome {
    let samples = samples();
    let easy2 = samples.iter().find(|s| s.id == "easy-2").unwrap();
    let store = load_replay(&fixtures_dir().join("replay/missing-params/easy-2.replay.json")).unwrap();
    let p = Pipeline::new(LlmClient::new(Arc::new(ReplayBackend::new(store))));
    let mut s: PipelineSession = p.start_session(&easy2.request, PipelineConfig::full()).unwrap();
    run_unattended(&p, &mut s, &Script::default()).map_err(|e| e.to_string())?;
    check(s.stage == Stage::AwaitAnswers, || format!("stage {}", s.stage))?;
    let asked: BTreeSet<(String, String)> =
        s.pending_questions.iter().map(|q| (q.step_id.clone(), q.parameter.clone())).collect();
    let expected: BTreeSet<(String, String)> =
        [("step-2", "to"), ("step-2", "body")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    check(s.pending_questions.len() == 2 && asked == expected, || format!("questions {asked:?}"))?;

    let gold_step = serde_json::to_value(flowsmith_core::ir::serialize::step_to_value(easy2.gold.step("step-2").unwrap())).unwrap();
    let answers: Vec<Answer> = ["to", "body"]
        .iter()
        .map(|p| Answer {
            step_id: "step-2".into(),
            parameter: p.to_string(),
            value: gold_step["parameters"][p].as_str().unwrap().to_string(),
        })
        .collect();
    p.apply_answers(&mut s, &answers).unwrap();
    check(s.stage == Stage::Finalized, || format!("after answers: {}", s.stage))?;
    let w = s.workflow.as_ref().unwrap();
    let missing = find_missing_essentials(w, EssentialCatalog::builtin());
    check(missing.is_empty(), || format!("still missing {missing:?}"))?;
    Ok("2 questions (to, body); answered and finalized with no missing essentials".into())
}

// ---- 6 ---------------------------------------------------------------------

fn load_gold(id: &str) -> Workflow {
    parse_workflow(&std::fs::read_to_string(fixtures_dir().join(format!("goldens/{id}.json"))).unwrap()).unwrap()
}

fn interpreter() -> Outcome {
    // Newest five messages of the seeded mailbox.
    let seed: MailboxSeed =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join("seeds/mailbox.json")).unwrap()).unwrap();
    check(seed.messages.len() == 7, || format!("mailbox seed has {} messages", seed.messages.len()))?;
    let mut by_date: Vec<(String, String)> =
        seed.messages.iter().map(|m| (m.date.clone(), m.id.clone())).collect();
    by_date.sort_by(|a, b| b.0.cmp(&a.0));
    let expected: Vec<String> = by_date.into_iter().take(5).map(|(_, id)| id).collect();
    let mut adapters = Adapters::new().with(MockMailbox::new(seed));
    let report = Interpreter::new(&mut adapters).run(&load_gold("easy-1")).map_err(|e| e.to_string())?;
    check(report.status == ExecStatus::Completed, || format!("easy-1 {:?}", report.error))?;
    let got: Vec<String> = report.final_context["emails"]
        .as_array()
        .ok_or("no email list")?
        .iter()
        .map(|m| m["id"].as_str().unwrap_or_default().to_string())
        .collect();
    check(got == expected, || format!("emails {got:?}, expected {expected:?}"))?;

    // Bonus column over the seeded workbook.
    let seed: SpreadsheetSeed =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join("seeds/sheets.json")).unwrap()).unwrap();
    let sheet = MockSpreadsheet::new(seed);
    let mut adapters = Adapters::new().with(sheet.clone());
    let report = Interpreter::new(&mut adapters).run(&load_gold("medium-2")).map_err(|e| e.to_string())?;
    check(report.status == ExecStatus::Completed, || format!("medium-2 {:?}", report.error))?;
    let rows = sheet.sheet("EmployeeData.xlsx", "Sheet1").ok_or("sheet vanished")?.rows;
    check(rows.len() == 4, || format!("{} rows", rows.len()))?;
    for row in &rows {
        let salary = row["Salary"].as_f64().unwrap();
        let pct = row["Bonus percentage"].as_f64().unwrap();
        let bonus = row.get("Bonus ($)").and_then(Value::as_f64).ok_or("missing bonus cell")?;
        check((bonus - salary * pct / 100.0).abs() <= 1e-9, || format!("bonus {bonus} for {salary} at {pct}%"))?;
    }

    // Randomized programs against the simulator.
    let runs = std::cell::RefCell::new(BTreeMap::<&'static str, usize>::new());
    runner(200)
        .run(&programs::program(), |program| {
            let compiled = programs::compile(&program);
            let mut adapters = Adapters::new();
            let report = Interpreter::new(&mut adapters).run_unchecked(&compiled.workflow);
            let expected = compiled.simulate();
            let got = programs::observed(&report);
            proptest::prop_assert_eq!(&got, &expected);
            if report.status == ExecStatus::Completed {
                let leaked = report.final_context.keys().filter(|k| k.starts_with("item_")).count();
                proptest::prop_assert_eq!(leaked, 0);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    // Count outcomes over the same deterministic stream for the report line.
    runner(200)
        .run(&programs::program(), |program| {
            let compiled = programs::compile(&program);
            let kind = match compiled.simulate().status {
                ExecStatus::Completed => "completed",
                ExecStatus::Terminated => "terminated",
                ExecStatus::Faulted => "uncaught",
            };
            *runs.borrow_mut().entry(kind).or_default() += 1;
            Ok(())
        })
        .ok();
    Ok(format!("5 newest emails in order, 4 bonus cells within 1e-9, 200 programs agree ({:?})", runs.into_inner()))
}

// ---- 7 ---------------------------------------------------------------------

fn expected_bucket(class: MutantClass) -> f64 {
    match class {
        MutantClass::UseBeforeDef | MutantClass::MissingEssential => 0.75,
        MutantClass::DanglingId | MutantClass::Unreachable | MutantClass::ExtractSource => 0.5,
        MutantClass::ExtraKey => 0.25,
    }
}

fn without_loop(gold: &Workflow) -> Workflow {
    let mut doc = flowsmith_core::ir::serialize::workflow_to_value(gold);
    let steps = doc["steps"].as_array_mut().unwrap();
    let header = steps.iter().position(|s| s["type"] == "Loop").expect("gold has a loop");
    let body = steps[header]["bodyStartStepId"].clone();
    let header_id = steps[header]["id"].clone();
    steps.remove(header);
    for s in steps.iter_mut() {
        if s["nextStepId"] == header_id {
            s["nextStepId"] = body.clone();
        }
    }
    flowsmith_core::ir::parse::workflow_from_value(&doc).unwrap()
}

fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, x)| x.clone()).collect())
        .collect()
}

fn scorer_rubric() -> Outcome {
    let samples = samples();
    for s in &samples {
        let b = score_structural(&s.gold, &s.gold).bucket.value();
        check(b == 1.0, || format!("score({0}, {0}) = {b}", s.id))?;
    }
    let ms = mutants(&samples);
    for m in &ms {
        let gold = &samples.iter().find(|s| s.id == m.sample_id).unwrap().gold;
        let b = score_structural(&m.workflow, gold).bucket.value();
        let want = expected_bucket(m.class);
        check(b == want, || format!("{} scored {b}, expected {want}", m.id))?;
    }
    let medium2 = &samples.iter().find(|s| s.id == "medium-2").unwrap().gold;
    let b = score_structural(&without_loop(medium2), medium2).bucket.value();
    check(b == 0.5, || format!("loop-removed variant scored {b}"))?;

    let mut comparisons = 0;
    for s in &samples {
        let ids: Vec<&str> = ms.iter().filter(|m| m.sample_id == s.id).map(|m| m.id.as_str()).collect();
        let score = |set: &[&str]| score_structural(&compose(&samples, &s.id, set).unwrap(), &s.gold).bucket.value();
        for set in subsets(&ids).into_iter().filter(|set| set.len() >= 2) {
            let whole = compose(&samples, &s.id, &set).unwrap();
            let mut parts = Vec::new();
            for skip in &set {
                let rest: Vec<&str> = set.iter().copied().filter(|x| x != skip).collect();
                parts.push((rest.clone(), compose(&samples, &s.id, &rest).unwrap()));
            }
            // A later edit that overwrites an earlier one does not add a defect.
            if parts.iter().any(|(_, w)| *w == whole) {
                continue;
            }
            let b = score(&set);
            check(b == score(&set), || "scoring is not deterministic".into())?;
            for (rest, _) in &parts {
                comparisons += 1;
                let smaller = score(rest);
                check(b <= smaller, || format!("{}: {set:?} scored {b} > {rest:?} scored {smaller}", s.id))?;
            }
        }
    }
    check(Bucket::VALUES.contains(&0.5), || "bucket table changed".into())?;
    Ok(format!("golds 1.0, 20 mutants in their buckets, loop removal 0.5, {comparisons} lattice comparisons"))
}

// ---- 8 ---------------------------------------------------------------------

/// Planned bucket of every (configuration, sample) pair on the desk fixtures.
fn planned(config: &str, sample: &str) -> f64 {
    match (config, sample) {
        ("baseline-gpt-3.5-0125", "easy-2") => 0.75,
        ("baseline-gpt-3.5-0125", "medium-1" | "medium-2") => 0.5,
        ("baseline-gpt-3.5-0125", "hard-1" | "hard-2") => 0.25,
        ("baseline-gpt-4o-mini", "medium-2") => 0.75,
        ("baseline-gpt-4o-mini", "hard-1") => 0.5,
        ("baseline-gpt-4o-mini", "hard-2") => 0.25,
        ("nua" | "hfl", "hard-1") => 0.25,
        ("nua" | "gc", "hard-2") => 0.25,
        _ => 1.0,
    }
}

fn experiment_harness() -> Outcome {
    let samples = samples();
    let scripts = decisions();
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for config in ExperimentConfig::standard_set() {
        let client = LlmClient::new(Arc::new(ReplayBackend::new(replay_store(&config.name))));
        let report = run_experiment(&samples, &config, &Pipeline::new(client), &scripts).map_err(|e| e.to_string())?;
        for (tier, label) in [(Difficulty::Easy, "easy"), (Difficulty::Medium, "medium"), (Difficulty::Hard, "hard")] {
            let planned_scores: Vec<f64> =
                samples.iter().filter(|s| s.difficulty == tier).map(|s| planned(&config.name, &s.id) * 100.0).collect();
            let want = planned_scores.iter().sum::<f64>() / planned_scores.len() as f64;
            let got = report.row(label).ok_or_else(|| format!("{} lacks a {label} row", config.name))?.accuracy;
            check(got == want, || format!("{} {label}: {got}, hand-computed {want}", config.name))?;
        }
        let all: Vec<f64> = samples.iter().map(|s| planned(&config.name, &s.id) * 100.0).collect();
        let want = all.iter().sum::<f64>() / all.len() as f64;
        let got = report.row("overall").ok_or("no overall row")?.accuracy;
        check(got == want, || format!("{} overall: {got}, hand-computed {want}", config.name))?;
        reports.push(report);
    }
    let overall = |name: &str| reports.iter().find(|r| r.config == name).and_then(|r| r.row("overall")).unwrap().accuracy;
    for baseline in ["baseline-gpt-3.5-0125", "baseline-gpt-4o-mini"] {
        check(overall("full") >= overall(baseline), || format!("full {} < {baseline} {}", overall("full"), overall(baseline)))?;
    }
    let rendered = flowsmith_core::eval::render_csv(&reports);
    check(rendered.lines().count() == 1 + 6 * 4, || "CSV report has the wrong row count".into())?;
    Ok(format!(
        "6 configs; hard tier {}",
        reports.iter().map(|r| format!("{} {}", r.config, r.row("hard").unwrap().accuracy)).collect::<Vec<_>>().join(", ")
    ))
}

// ---- driver ----------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 8] = [
        ("round-trip", Some(Duration::from_secs(1)), round_trip),
        ("validator mutant suite", Some(Duration::from_secs(10)), mutant_suite),
        ("end-to-end replay synthesis", None, replay_synthesis),
        ("feedback-loop protocol", None, feedback_protocol),
        ("missing-parameter protocol", None, missing_parameters),
        ("interpreter semantics", Some(Duration::from_secs(30)), interpreter),
        ("scorer rubric", None, scorer_rubric),
        ("experiment harness", None, experiment_harness),
    ];
    let mut failed = 0;
    for (n, (name, budget, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = started.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if took > *b => Err(format!("took {:.2} s, budget {:.0} s", took.as_secs_f64(), b.as_secs_f64())),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {} {name} ({:.2} s): {detail}", n + 1, took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({:.2} s): {why}", n + 1, took.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
