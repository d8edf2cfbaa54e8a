//! `synthesize`, `record` and `replay`: one request through the pipeline.
//!
//! Runs are unattended whenever `--feedback approve` or `--decisions` is
//! given, or stdin is not a terminal; they then never wait for input. Otherwise
//! the human checkpoints are answered on the terminal.

use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use flowsmith_core::eval::ExperimentConfig;
use flowsmith_core::ir::serialize_canonical;
use flowsmith_core::llm::{LlmClient, ReplayStore, DEFAULT_MODEL};
use flowsmith_core::pipeline::{
    advance, run_unattended, Answer, FeedbackDecision, FeedbackOutcome, Pipeline, PipelineConfig, PipelineSession,
    ScreeningDecision, Script, Stage,
};
use flowsmith_core::validate::{has_errors, validate_all_with};

use crate::backend::{load_store, BackendSpec};
use crate::failure::{read_text, write_text, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FeedbackMode {
    /// Approve every summary without asking.
    Approve,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// File holding the natural-language request.
    #[arg(long)]
    pub request: PathBuf,
    /// Named base configuration: full, nua, gc, hfl or one of the baselines.
    #[arg(long, default_value = "full")]
    pub config: String,
    #[arg(long)]
    pub no_screening: bool,
    #[arg(long)]
    pub no_feedback: bool,
    #[arg(long)]
    pub max_feedback_loops: Option<u32>,
    /// Model name sent with every call.
    #[arg(long, env = "FLOWSMITH_MODEL")]
    pub model: Option<String>,
    /// JSON array of `{stepId, parameter, value}` answers to missing-parameter questions.
    #[arg(long)]
    pub answers: Option<PathBuf>,
    /// JSON decisions for every checkpoint (`screeningRewrite`, `feedback`, `answers`).
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub feedback: Option<FeedbackMode>,
    /// Where to write the canonical workflow; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SynthArgs {
    fn pipeline_config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = ExperimentConfig::by_name(&self.config)
            .ok_or_else(|| Failure::usage(format!("unknown configuration `{}`", self.config)))?
            .pipeline;
        if self.no_screening {
            cfg.enable_screening = false;
        }
        if self.no_feedback {
            cfg.enable_feedback_loop = false;
        }
        if let Some(n) = self.max_feedback_loops {
            cfg.max_feedback_loops = n;
        }
        if let Some(model) = &self.model {
            cfg.model = model.clone();
        } else if cfg.model.is_empty() {
            cfg.model = DEFAULT_MODEL.to_string();
        }
        Ok(cfg)
    }

    fn script(&self) -> CliResult<Option<Script>> {
        let mut script = match &self.decisions {
            Some(path) => Some(
                serde_json::from_str::<Script>(&read_text(path)?)
                    .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
            ),
            None => None,
        };
        if let Some(path) = &self.answers {
            let answers: Vec<Answer> = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            script.get_or_insert_with(Script::default).answers.extend(answers);
        }
        let unattended = self.feedback.is_some() || script.is_some() || !std::io::stdin().is_terminal();
        Ok(unattended.then(|| script.unwrap_or_default()))
    }
}

fn client_for(args: &SynthArgs, backend: &BackendSpec) -> CliResult<LlmClient> {
    let config = args.pipeline_config()?;
    Ok(LlmClient::new(backend.build(None)?).with_model(config.model))
}

/// Runs one request through `client` and writes the workflow.
fn run(args: &SynthArgs, client: &LlmClient) -> CliResult<PipelineSession> {
    let request = read_text(&args.request)?;
    let config = args.pipeline_config()?;
    let pipeline = Pipeline::new(client.clone());
    let mut session = pipeline.start_session(request.trim_end(), config)?;
    match args.script()? {
        Some(script) => run_unattended(&pipeline, &mut session, &script)?,
        None => interactive(&pipeline, &mut session)?,
    }
    finish(args, &pipeline, &session)?;
    Ok(session)
}

fn finish(args: &SynthArgs, pipeline: &Pipeline, s: &PipelineSession) -> CliResult {
    let usage = s.total_usage();
    eprintln!(
        "stage {} after {} calls ({} input, {} completion tokens)",
        s.stage,
        s.ledger.len(),
        usage.input_tokens,
        usage.completion_tokens
    );
    if s.stage == Stage::Failed {
        return Err(Failure::Findings("the session ended in the failed stage".into()));
    }
    let workflow = s.current_workflow().ok_or_else(|| Failure::Findings("the session produced no workflow".into()))?;
    let text = serialize_canonical(workflow);
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    for q in &s.pending_questions {
        eprintln!("unanswered {} {}: {}", q.step_id, q.parameter, q.text);
    }
    let diagnostics = validate_all_with(workflow, pipeline.catalog());
    if has_errors(&diagnostics) {
        for d in diagnostics.iter().filter(|d| d.is_error()) {
            eprintln!("{d}");
        }
        return Err(Failure::Findings("the synthesized workflow has validation errors".into()));
    }
    Ok(())
}

fn prompt_line(label: &str) -> CliResult<String> {
    eprint!("{label}");
    std::io::stderr().flush().ok();
    let mut line = String::new();
    let read = std::io::stdin().lock().read_line(&mut line).map_err(Failure::usage)?;
    if read == 0 {
        return Err(Failure::usage("stdin closed while waiting for a decision"));
    }
    Ok(line.trim().to_string())
}

fn interactive(p: &Pipeline, s: &mut PipelineSession) -> CliResult {
    loop {
        advance(p, s)?;
        match s.stage {
            Stage::AwaitScreeningDecision => {
                eprintln!("The request leaves open:");
                for f in &s.follow_ups {
                    eprintln!("  - {f}");
                }
                let line = prompt_line("Clarified request (empty to proceed as is): ")?;
                let decision =
                    if line.is_empty() { ScreeningDecision::Proceed } else { ScreeningDecision::Rewrite(line) };
                p.resolve_screening(s, decision)?;
            }
            Stage::AwaitFeedback => {
                eprintln!("{}", s.summary.as_deref().unwrap_or_default());
                let line = prompt_line("Approve (empty), `abort`, or describe the edits: ")?;
                let decision = match line.as_str() {
                    "" | "approve" | "a" => FeedbackDecision::Approve,
                    "abort" => FeedbackDecision::Abort,
                    _ => FeedbackDecision::Edit(line),
                };
                if p.apply_feedback(s, decision)? == FeedbackOutcome::LoopLimitReached {
                    eprintln!("No edit rounds left; approve or abort.");
                }
            }
            Stage::AwaitAnswers => {
                let mut answers = Vec::new();
                for q in s.pending_questions.clone() {
                    let value = prompt_line(&format!("{} ({} {}): ", q.text, q.step_id, q.parameter))?;
                    answers.push(Answer { step_id: q.step_id, parameter: q.parameter, value });
                }
                p.apply_answers(s, &answers)?;
            }
            _ => return Ok(()),
        }
    }
}

pub fn synthesize(args: &SynthArgs, backend: &BackendSpec) -> CliResult {
    run(args, &client_for(args, backend)?).map(|_| ())
}

/// Runs the request and saves every call made as a replay store, even when
/// the run ends in findings.
pub fn record(args: &SynthArgs, backend: &BackendSpec, store: &Path) -> CliResult {
    let client = client_for(args, backend)?;
    let outcome = run(args, &client);
    let recorded = ReplayStore::from_calls(&client.log().snapshot());
    recorded.save(store).map_err(|e| Failure::usage(format!("{}: {e}", store.display())))?;
    eprintln!("recorded {} calls to {}", recorded.len(), store.display());
    outcome.map(|_| ())
}

/// Re-runs a request against a store and checks that the session's ledger
/// accounts for exactly the tokens the store served.
pub fn replay(args: &SynthArgs, store: &Path) -> CliResult {
    let expected = load_store(store)?;
    let client = client_for(args, &BackendSpec::Scripted(store.to_path_buf()))?;
    let session = run(args, &client)?;
    let served = ReplayStore::from_calls(&client.log().snapshot()).total_usage();
    let ledger = session.total_usage();
    if ledger != served {
        return Err(Failure::Findings(format!("ledger {ledger:?} differs from the replayed usage {served:?}")));
    }
    eprintln!("replayed {} of {} stored calls", client.log().len(), expected.len());
    Ok(())
}
