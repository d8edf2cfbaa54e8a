//! Structural proxy scorer.
//!
//! Candidate steps are aligned greedily to gold steps, then every difference
//! is recorded as a finding whose rule id determines its defect class. The
//! bucket is the cap of the worst class present:
//!
//! | class      | rules                                                                 | cap  |
//! |------------|-----------------------------------------------------------------------|------|
//! | minor      | param-value, missing-prefix, expression, extra-param, extra-step      | 0.75 |
//! | structural | unaligned-step, missing-loop, wrong-function, flow-mismatch, dangling-id, extract-misuse | 0.5 (one) / 0.25 (two or more) |
//! | severe     | hallucinated-function, hallucinated-key                               | 0.25 |
//! | fatal      | empty, or fewer than half of the gold steps aligned                   | 0.0  |

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ir::{parse_expression, Expression, Step, StepKind, Workflow};
use crate::validate::{Diagnostic, EssentialCatalog};

/// One of the five rubric values.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bucket(f64);

impl Bucket {
    pub const VALUES: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];
    pub const PERFECT: Bucket = Bucket(1.0);
    pub const MINOR: Bucket = Bucket(0.75);
    pub const STRUCTURAL: Bucket = Bucket(0.5);
    pub const SEVERE: Bucket = Bucket(0.25);
    pub const ZERO: Bucket = Bucket(0.0);

    pub fn new(value: f64) -> Option<Bucket> {
        Self::VALUES.contains(&value).then_some(Bucket(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Bucket {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, String> {
        Bucket::new(v).ok_or_else(|| format!("{v} is not a rubric bucket"))
    }
}

impl From<Bucket> for f64 {
    fn from(b: Bucket) -> f64 {
        b.0
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scorer {
    StructuralProxy,
    Manual,
}

impl Scorer {
    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::StructuralProxy => "structural-proxy",
            Scorer::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreRecord {
    pub sample_id: String,
    pub bucket: Bucket,
    pub findings: Vec<Diagnostic>,
    pub scorer: Scorer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScoreRecord {
    pub fn for_sample(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = sample_id.into();
        self
    }

    /// A zero score for a sample that produced no workflow.
    pub fn fault(sample_id: impl Into<String>, note: impl Into<String>) -> Self {
        ScoreRecord {
            sample_id: sample_id.into(),
            bucket: Bucket::ZERO,
            findings: Vec::new(),
            scorer: Scorer::StructuralProxy,
            note: Some(note.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DefectClass {
    Minor,
    Structural,
    Severe,
    Fatal,
}

impl DefectClass {
    /// The class of a `score/*` rule, `None` for other rules.
    pub fn of_rule(rule: &str) -> Option<DefectClass> {
        Some(match rule.strip_prefix("score/")? {
            "param-value" | "missing-prefix" | "expression" | "extra-param" | "extra-step" => DefectClass::Minor,
            "unaligned-step" | "missing-loop" | "wrong-function" | "flow-mismatch" | "dangling-id"
            | "extract-misuse" => DefectClass::Structural,
            "hallucinated-function" | "hallucinated-key" => DefectClass::Severe,
            "empty" => DefectClass::Fatal,
            _ => return None,
        })
    }

    /// The highest bucket a single defect of this class allows.
    pub fn cap(self) -> Bucket {
        match self {
            DefectClass::Minor => Bucket::MINOR,
            DefectClass::Structural => Bucket::STRUCTURAL,
            DefectClass::Severe => Bucket::SEVERE,
            DefectClass::Fatal => Bucket::ZERO,
        }
    }
}

/// The bucket implied by a set of findings.
pub fn bucket_for(findings: &[Diagnostic]) -> Bucket {
    let mut counts: HashMap<DefectClass, usize> = HashMap::new();
    for f in findings {
        if let Some(c) = DefectClass::of_rule(&f.rule) {
            *counts.entry(c).or_default() += 1;
        }
    }
    let n = |c| counts.get(&c).copied().unwrap_or(0);
    if n(DefectClass::Fatal) > 0 {
        Bucket::ZERO
    } else if n(DefectClass::Severe) > 0 || n(DefectClass::Structural) >= 2 {
        Bucket::SEVERE
    } else if n(DefectClass::Structural) == 1 {
        Bucket::STRUCTURAL
    } else if n(DefectClass::Minor) > 0 {
        Bucket::MINOR
    } else {
        Bucket::PERFECT
    }
}

/// Scores `candidate` against `gold` with the built-in catalog.
pub fn score_structural(candidate: &Workflow, gold: &Workflow) -> ScoreRecord {
    score_structural_with(candidate, gold, EssentialCatalog::builtin())
}

pub fn score_structural_with(candidate: &Workflow, gold: &Workflow, catalog: &EssentialCatalog) -> ScoreRecord {
    let mut findings = Vec::new();
    if candidate.steps.is_empty() {
        findings.push(Diagnostic::new("score/empty", None, "$.steps", "the candidate has no steps"));
    } else {
        let alignment = align(candidate, gold);
        Comparison { candidate, gold, catalog, alignment: &alignment, findings: &mut findings }.run();
        if !gold.steps.is_empty() && alignment.pairs.len() * 2 < gold.steps.len() {
            findings.push(Diagnostic::new(
                "score/empty",
                None,
                "$.steps",
                format!("only {} of {} gold steps have a counterpart", alignment.pairs.len(), gold.steps.len()),
            ));
        }
    }
    ScoreRecord {
        sample_id: String::new(),
        bucket: bucket_for(&findings),
        findings,
        scorer: Scorer::StructuralProxy,
        note: None,
    }
}

// ---- alignment -------------------------------------------------------------

#[derive(Debug, Default)]
struct Alignment {
    /// gold index -> candidate index
    pairs: BTreeMap<usize, usize>,
    /// candidate index -> gold index
    reverse: BTreeMap<usize, usize>,
}

impl Alignment {
    fn pair(&mut self, g: usize, c: usize) {
        self.pairs.insert(g, c);
        self.reverse.insert(c, g);
    }
}

fn words(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn name_similarity(a: &Step, b: &Step) -> f64 {
    let (x, y) = (words(&a.name), words(&b.name));
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    x.intersection(&y).count() as f64 / x.union(&y).count() as f64
}

/// The function a step calls, if its type has one.
fn function_of(step: &Step) -> Option<String> {
    match &step.kind {
        StepKind::Api(api) => api.function.clone(),
        StepKind::Exception(e) => e.function.map(|f| f.as_str().to_string()),
        StepKind::Loop(l) => l.mode.map(|m| m.as_str().to_string()),
        _ => None,
    }
}

fn align(candidate: &Workflow, gold: &Workflow) -> Alignment {
    let mut a = Alignment::default();
    // Exact signature first, then the same step type with another function.
    let passes: [fn(&Step, &Step) -> bool; 2] = [
        |g, c| g.step_type() == c.step_type() && function_of(g) == function_of(c),
        |g, c| g.step_type() == c.step_type(),
    ];
    for same in passes {
        for (gi, g) in gold.steps.iter().enumerate() {
            if a.pairs.contains_key(&gi) {
                continue;
            }
            let best = candidate
                .steps
                .iter()
                .enumerate()
                .filter(|(ci, c)| !a.reverse.contains_key(ci) && same(g, c))
                .map(|(ci, c)| (ci, (c.id == g.id, name_similarity(g, c))))
                .fold(None::<(usize, (bool, f64))>, |best, (ci, key)| match best {
                    Some((_, bk)) if bk >= key => best,
                    _ => Some((ci, key)),
                });
            if let Some((ci, _)) = best {
                a.pair(gi, ci);
            }
        }
    }
    a
}

// ---- comparison ------------------------------------------------------------

fn link_slots(step: &Step) -> Vec<(&'static str, Option<&str>)> {
    let mut out: Vec<(&'static str, Option<&str>)> = match &step.kind {
        StepKind::Decision(d) => vec![("trueStepId", d.true_step_id.as_deref()), ("falseStepId", d.false_step_id.as_deref())],
        StepKind::Loop(l) => vec![("bodyStartStepId", l.body_start_step_id.as_deref())],
        StepKind::Exception(e) => {
            vec![("tryStartStepId", e.try_start_step_id.as_deref()), ("catchStepId", e.catch_step_id.as_deref())]
        }
        _ => Vec::new(),
    };
    out.push(("nextStepId", step.next_step_id.as_deref()));
    out
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn same_value(g: &Value, c: &Value) -> bool {
    match (g, c) {
        (Value::String(a), Value::String(b)) => normalize(a) == normalize(b),
        _ => g == c,
    }
}

fn reference_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{\s*([^}]*?)\s*\}").expect("valid regex"))
}

/// Whether `c` is `g` with its `${name}` references written as bare names.
fn lost_prefix(g: &Value, c: &Value) -> bool {
    match (g, c) {
        (Value::String(g), Value::String(c)) => {
            reference_pattern().is_match(g) && normalize(&reference_pattern().replace_all(g, "$1")) == normalize(c)
        }
        _ => false,
    }
}

fn same_expression(g: Option<&Expression>, c: Option<&Expression>) -> bool {
    match (g, c) {
        (None, None) => true,
        (Some(g), Some(c)) => match (parse_expression(g.text()), parse_expression(c.text())) {
            (Ok(a), Ok(b)) => a == b,
            _ => g.text().split_whitespace().collect::<String>() == c.text().split_whitespace().collect::<String>(),
        },
        _ => false,
    }
}

struct Comparison<'a> {
    candidate: &'a Workflow,
    gold: &'a Workflow,
    catalog: &'a EssentialCatalog,
    alignment: &'a Alignment,
    findings: &'a mut Vec<Diagnostic>,
}

impl Comparison<'_> {
    fn push(&mut self, rule: &str, step_id: Option<&str>, path: String, message: String) {
        self.findings.push(Diagnostic::new(rule, step_id, path, message));
    }

    fn run(mut self) {
        let (candidate, gold) = (self.candidate, self.gold);
        let suppressed = self.suppressed_region();

        for (gi, g) in gold.steps.iter().enumerate() {
            if self.alignment.pairs.contains_key(&gi) {
                continue;
            }
            let (rule, what) = match g.kind {
                StepKind::Loop(_) => ("score/missing-loop", "Loop structure"),
                _ => ("score/unaligned-step", "step"),
            };
            self.push(rule, Some(&g.id), format!("$.steps[{gi}]"), format!("gold {what} `{}` ({}) has no counterpart", g.id, g.name));
        }
        for (ci, c) in candidate.steps.iter().enumerate() {
            if !c.extra.is_empty() {
                let keys: Vec<&str> = c.extra.keys().map(String::as_str).collect();
                self.push("score/hallucinated-key", Some(&c.id), format!("$.steps[{ci}]"), format!("undeclared keys {keys:?}"));
            }
            if let StepKind::Api(api) = &c.kind {
                if let Some(f) = &api.function {
                    if !self.catalog.contains(api.tool, f) {
                        self.push(
                            "score/hallucinated-function",
                            Some(&c.id),
                            format!("$.steps[{ci}].function"),
                            format!("{} has no function `{f}`", api.tool),
                        );
                    }
                }
            }
            if !self.alignment.reverse.contains_key(&ci) {
                self.push("score/extra-step", Some(&c.id), format!("$.steps[{ci}]"), format!("`{}` ({}) is not in the gold", c.id, c.name));
            }
        }

        self.compare_link(
            "$.defaultStartStepId".into(),
            None,
            Some(gold.default_start_step_id.as_str()),
            Some(candidate.default_start_step_id.as_str()),
        );
        for (&gi, &ci) in &self.alignment.pairs {
            let (g, c) = (&gold.steps[gi], &candidate.steps[ci]);
            if !suppressed.contains(&gi) {
                let (gl, cl) = (link_slots(g), link_slots(c));
                for (field, gt) in gl {
                    let ct = cl.iter().find(|(f, _)| *f == field).and_then(|(_, t)| *t);
                    self.compare_link(format!("$.steps[{ci}].{field}"), Some(&c.id), gt, ct);
                }
            }
            self.compare_fields(ci, g, c);
        }
    }

    /// Gold steps inside a Loop or TryBlock that the candidate lacks. Their
    /// links are expected to differ, and that difference is part of the
    /// missing construct rather than a defect of its own.
    fn suppressed_region(&self) -> BTreeSet<usize> {
        let gold = self.gold;
        let index: HashMap<&str, usize> = gold.steps.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let mut region = BTreeSet::new();
        for (hi, h) in gold.steps.iter().enumerate() {
            if self.alignment.pairs.contains_key(&hi) {
                continue;
            }
            let inner: Vec<&str> = match &h.kind {
                StepKind::Loop(l) => l.body_start_step_id.as_deref().into_iter().collect(),
                StepKind::Exception(e) => e.try_start_step_id.as_deref().into_iter().chain(e.catch_step_id.as_deref()).collect(),
                _ => continue,
            };
            let mut queue: VecDeque<usize> = inner.iter().filter_map(|id| index.get(id).copied()).collect();
            while let Some(i) = queue.pop_front() {
                if i == hi || !region.insert(i) {
                    continue;
                }
                for (_, t) in link_slots(&gold.steps[i]) {
                    if let Some(&j) = t.and_then(|t| index.get(t)) {
                        queue.push_back(j);
                    }
                }
            }
        }
        region
    }

    fn compare_link(&mut self, path: String, step_id: Option<&str>, gold_target: Option<&str>, cand_target: Option<&str>) {
        let c_index = |id: &str| self.candidate.step_index(id);
        let g_index = |id: &str| self.gold.step_index(id);
        if let Some(ct) = cand_target {
            match c_index(ct) {
                None => {
                    self.push("score/dangling-id", step_id, path, format!("points to missing step `{ct}`"));
                    return;
                }
                Some(ci) if !self.alignment.reverse.contains_key(&ci) => return,
                Some(_) => {}
            }
        }
        if let Some(gi) = gold_target.and_then(g_index) {
            if !self.alignment.pairs.contains_key(&gi) {
                return;
            }
        }
        let mapped = cand_target.and_then(c_index).map(|ci| self.gold.steps[self.alignment.reverse[&ci]].id.as_str());
        if mapped != gold_target {
            let show = |t: Option<&str>| t.map_or("null".to_string(), |t| format!("`{t}`"));
            self.push(
                "score/flow-mismatch",
                step_id,
                path,
                format!("leads to {} where the gold leads to {}", show(mapped), show(gold_target)),
            );
        }
    }

    fn compare_fields(&mut self, ci: usize, g: &Step, c: &Step) {
        let at = |field: &str| format!("$.steps[{ci}].{field}");
        let id = Some(c.id.as_str());
        let differs = |a: &Option<String>, b: &Option<String>| a.as_deref().map(normalize) != b.as_deref().map(normalize);
        match (&g.kind, &c.kind) {
            (StepKind::Api(ga), StepKind::Api(ca)) => {
                if ga.function != ca.function {
                    let known = ca.function.as_deref().is_some_and(|f| self.catalog.contains(ca.tool, f));
                    if known || ca.function.is_none() {
                        let message = format!("calls {:?} where the gold calls {:?}", ca.function, ga.function);
                        self.push("score/wrong-function", id, at("function"), message);
                    }
                    return;
                }
                for (k, gv) in &ga.parameters {
                    match ca.parameters.get(k) {
                        None => self.push("score/param-value", id, at(&format!("parameters.{k}")), format!("`{k}` is missing")),
                        Some(cv) if lost_prefix(gv, cv) => {
                            self.push("score/missing-prefix", id, at(&format!("parameters.{k}")), format!("`{k}` = {cv} lacks `${{}}`"))
                        }
                        Some(cv) if !same_value(gv, cv) => {
                            self.push("score/param-value", id, at(&format!("parameters.{k}")), format!("`{k}` = {cv}, gold has {gv}"))
                        }
                        Some(_) => {}
                    }
                }
                for k in ca.parameters.keys().filter(|k| !ga.parameters.contains_key(*k)) {
                    self.push("score/extra-param", id, at(&format!("parameters.{k}")), format!("`{k}` is not in the gold"));
                }
                if differs(&ga.output_variable, &ca.output_variable) {
                    self.push("score/param-value", id, at("outputVariable"), "different output variable".into());
                }
            }
            (StepKind::Calculation(gc), StepKind::Calculation(cc)) => {
                if !same_expression(gc.expression.as_ref(), cc.expression.as_ref()) {
                    self.push("score/expression", id, at("expression"), "different expression".into());
                }
                if differs(&gc.output_variable, &cc.output_variable) {
                    self.push("score/param-value", id, at("outputVariable"), "different output variable".into());
                }
            }
            (StepKind::Decision(gd), StepKind::Decision(cd)) => {
                if !same_expression(gd.condition.as_ref(), cd.condition.as_ref()) {
                    self.push("score/expression", id, at("condition"), "different condition".into());
                }
            }
            (StepKind::Loop(gl), StepKind::Loop(cl)) => {
                if gl.mode != cl.mode {
                    self.push("score/flow-mismatch", id, at("mode"), "different loop mode".into());
                }
                if differs(&gl.collection_variable, &cl.collection_variable) || differs(&gl.item_variable, &cl.item_variable) {
                    self.push("score/param-value", id, at("collectionVariable"), "different loop variables".into());
                }
                if !same_expression(gl.condition.as_ref(), cl.condition.as_ref()) {
                    self.push("score/expression", id, at("condition"), "different condition".into());
                }
            }
            (StepKind::DataExtraction(gd), StepKind::DataExtraction(cd)) => {
                if differs(&gd.source_variable, &cd.source_variable) {
                    let message = format!("reads {:?} where the gold reads {:?}", cd.source_variable, gd.source_variable);
                    self.push("score/extract-misuse", id, at("sourceVariable"), message);
                }
                let fields = |d: &crate::ir::DataExtraction| -> BTreeSet<(String, String)> {
                    d.extractions
                        .iter()
                        .flatten()
                        .map(|e| (normalize(&e.field).to_lowercase(), e.output_variable.clone()))
                        .collect()
                };
                if fields(gd) != fields(cd) {
                    self.push("score/param-value", id, at("extractions"), "different extracted fields".into());
                }
            }
            (StepKind::Exception(ge), StepKind::Exception(ce)) => {
                if ge.function != ce.function {
                    let message = format!("{:?} where the gold has {:?}", ce.function, ge.function);
                    self.push("score/wrong-function", id, at("function"), message);
                    return;
                }
                if differs(&ge.message, &ce.message) || differs(&ge.error_variable, &ce.error_variable) {
                    self.push("score/param-value", id, at("message"), "different exception details".into());
                }
            }
            _ => {}
        }
    }
}

/// Mean accuracy in percent.
pub fn mean_accuracy(records: &[ScoreRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.bucket.value()).sum::<f64>() / records.len() as f64 * 100.0
}
