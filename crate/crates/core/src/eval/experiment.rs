use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSample, Difficulty};
use super::score::{mean_accuracy, score_structural, Bucket, ScoreRecord, Scorer};
use super::EvalError;
use crate::ir::Workflow;
use crate::pipeline::{run_unattended, Pipeline, PipelineConfig, PipelineSession, Script, Stage};

/// A named pipeline configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub name: String,
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, pipeline: PipelineConfig) -> Self {
        ExperimentConfig { name: name.into(), pipeline }
    }

    /// The two single-prompt baselines, the three ablations and the full pipeline.
    pub fn standard_set() -> Vec<ExperimentConfig> {
        vec![
            Self::new("baseline-gpt-3.5-0125", PipelineConfig::baseline("gpt-3.5-turbo-0125")),
            Self::new("baseline-gpt-4o-mini", PipelineConfig::baseline(crate::llm::DEFAULT_MODEL)),
            Self::new("nua", PipelineConfig::nua()),
            Self::new("gc", PipelineConfig::gc()),
            Self::new("hfl", PipelineConfig::hfl()),
            Self::new("full", PipelineConfig::full()),
        ]
    }

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        Self::standard_set().into_iter().find(|c| c.name == name)
    }
}

/// The outcome of one sample under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleResult {
    pub sample_id: String,
    pub difficulty: Difficulty,
    pub score: ScoreRecord,
    pub input_tokens: u64,
    pub completion_tokens: u64,
    /// Sum of the recorded completion latencies.
    pub seconds: f64,
    pub final_stage: Option<Stage>,
}

/// One line of a report: a difficulty tier or `overall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct ReportRow {
    pub config: String,
    pub difficulty: String,
    pub accuracy: f64,
    pub input_tokens: f64,
    pub completion_tokens: f64,
    pub mean_s: f64,
    pub median_s: f64,
    pub max_s: f64,
    pub min_s: f64,
}

pub const CSV_HEADER: [&str; 9] =
    ["config", "difficulty", "accuracy", "input_tokens", "completion_tokens", "mean_s", "median_s", "max_s", "min_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub config: String,
    pub scorer: Scorer,
    pub samples: Vec<SampleResult>,
    /// Per-difficulty rows in easy, medium, hard order, then `overall`.
    pub rows: Vec<ReportRow>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn row(config: &str, label: &str, samples: &[&SampleResult]) -> ReportRow {
    let scores: Vec<ScoreRecord> = samples.iter().map(|s| s.score.clone()).collect();
    let seconds: Vec<f64> = samples.iter().map(|s| s.seconds).collect();
    let tokens = |f: fn(&SampleResult) -> u64| mean(&samples.iter().map(|s| f(s) as f64).collect::<Vec<_>>());
    ReportRow {
        config: config.to_string(),
        difficulty: label.to_string(),
        accuracy: mean_accuracy(&scores),
        input_tokens: tokens(|s| s.input_tokens),
        completion_tokens: tokens(|s| s.completion_tokens),
        mean_s: mean(&seconds),
        median_s: median(&seconds),
        max_s: seconds.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x)))).unwrap_or(0.0),
        min_s: seconds.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x)))).unwrap_or(0.0),
    }
}

impl ExperimentReport {
    /// Aggregates sample results into rows.
    pub fn from_samples(config: impl Into<String>, scorer: Scorer, samples: Vec<SampleResult>) -> Self {
        let config = config.into();
        let mut rows = Vec::new();
        for d in Difficulty::ALL {
            let tier: Vec<&SampleResult> = samples.iter().filter(|s| s.difficulty == d).collect();
            if !tier.is_empty() {
                rows.push(row(&config, d.as_str(), &tier));
            }
        }
        if !samples.is_empty() {
            rows.push(row(&config, "overall", &samples.iter().collect::<Vec<_>>()));
        }
        ExperimentReport { config, scorer, samples, rows }
    }

    /// The same report re-aggregated with manual scores where one exists for a sample.
    pub fn with_manual_scores(&self, manual: &[ScoreRecord]) -> Self {
        let by_id: BTreeMap<&str, &ScoreRecord> = manual.iter().map(|r| (r.sample_id.as_str(), r)).collect();
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if let Some(r) = by_id.get(s.sample_id.as_str()) {
                    s.score = (*r).clone();
                }
                s
            })
            .collect();
        Self::from_samples(self.config.clone(), Scorer::Manual, samples)
    }

    pub fn row(&self, difficulty: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.difficulty == difficulty)
    }
}

/// Runs one sample and scores the workflow it produced.
pub fn run_sample(pipeline: &Pipeline, sample: &DatasetSample, config: &PipelineConfig, script: &Script) -> SampleResult {
    let mut session: Option<PipelineSession> = None;
    let outcome = pipeline.start_session(&sample.request, config.clone()).and_then(|s| {
        let s = session.insert(s);
        run_unattended(pipeline, s, script)
    });
    let candidate: Option<&Workflow> = session.as_ref().and_then(|s| s.current_workflow());
    let score = match (&outcome, candidate) {
        (Err(e), _) => ScoreRecord::fault(&sample.id, format!("{}: {e}", e.code())),
        (Ok(()), None) => ScoreRecord::fault(&sample.id, "the session produced no workflow"),
        (Ok(()), Some(w)) => score_structural(w, &sample.gold).for_sample(&sample.id),
    };
    let usage = session.as_ref().map(|s| s.total_usage()).unwrap_or_default();
    let latency_ms: u64 = session.as_ref().map_or(0, |s| s.ledger.iter().map(|r| r.latency_ms).sum());
    SampleResult {
        sample_id: sample.id.clone(),
        difficulty: sample.difficulty,
        score,
        input_tokens: usage.input_tokens,
        completion_tokens: usage.completion_tokens,
        seconds: latency_ms as f64 / 1000.0,
        final_stage: session.map(|s| s.stage),
    }
}

/// Runs every sample through `config`, in parallel, and aggregates the results.
///
/// Sample failures are scored 0.0 with a note; they never abort the run.
/// `scripts` maps sample ids to the decisions for their human checkpoints;
/// samples without one approve everything.
pub fn run_experiment(
    samples: &[DatasetSample],
    config: &ExperimentConfig,
    pipeline: &Pipeline,
    scripts: &BTreeMap<String, Script>,
) -> Result<ExperimentReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let default_script = Script::default();
    let results: Vec<SampleResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .iter()
            .map(|sample| {
                let script = scripts.get(&sample.id).unwrap_or(&default_script);
                scope.spawn(move || run_sample(pipeline, sample, &config.pipeline, script))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sample run panicked")).collect()
    });
    Ok(ExperimentReport::from_samples(&config.name, Scorer::StructuralProxy, results))
}

/// Records a human judgement of one sample.
pub fn score_record_manual(sample_id: &str, bucket: f64, notes: &str) -> Result<ScoreRecord, EvalError> {
    let bucket = Bucket::new(bucket).ok_or(EvalError::InvalidBucket(bucket))?;
    Ok(ScoreRecord {
        sample_id: sample_id.to_string(),
        bucket,
        findings: Vec::new(),
        scorer: Scorer::Manual,
        note: (!notes.is_empty()).then(|| notes.to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected json or csv)")),
        }
    }
}

pub fn render_json(reports: &[ExperimentReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize") + "\n"
}

/// One row per (config, difficulty) plus each config's overall row.
pub fn render_csv(reports: &[ExperimentReport]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in reports.iter().flat_map(|r| &r.rows) {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn emit_report(reports: &[ExperimentReport], format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    let text = match format {
        ReportFormat::Json => render_json(reports),
        ReportFormat::Csv => render_csv(reports),
    };
    std::fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}
