use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use flowsmith_core::eval::{
    emit_report, load_dataset, run_experiment, score_record_manual, ExperimentConfig, ExperimentReport, ReportFormat,
    ScoreRecord,
};
use flowsmith_core::interp::mocks::{MailboxSeed, MockMailbox, MockSpreadsheet, SandboxFs, SpreadsheetSeed, UiStub};
use flowsmith_core::interp::{Adapters, ExecStatus, InterpError, Interpreter, Limits};
use flowsmith_core::ir::{parse_workflow, Workflow};
use flowsmith_core::llm::LlmClient;
use flowsmith_core::pipeline::{FileSessionStore, Pipeline, PipelineConfig, Script};
use flowsmith_core::validate::{has_errors, to_json_lines, validate_all_with, EssentialCatalog};
use flowsmith_service::{AppState, ServiceConfig, DEFAULT_PORT, PORT_ENV};

use crate::backend::BackendSpec;
use crate::failure::{read_text, write_text, CliResult, Failure};

fn load_catalog(path: Option<&Path>) -> CliResult<EssentialCatalog> {
    match path {
        Some(p) => EssentialCatalog::from_json(&read_text(p)?).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => Ok(EssentialCatalog::builtin().clone()),
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Parses a workflow document; a malformed document is a finding, not a usage error.
fn load_workflow(path: &Path) -> CliResult<Workflow> {
    parse_workflow(&read_text(path)?).map_err(|e| {
        println!("error parse - {e}");
        Failure::Findings(format!("{} is not a workflow document", path.display()))
    })
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub workflow: PathBuf,
    /// Also print warnings.
    #[arg(long)]
    pub warnings: bool,
    /// Print JSON lines instead of `severity rule stepId message`.
    #[arg(long)]
    pub json: bool,
    /// Essential-parameter catalog replacing the built-in one.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

pub fn validate(args: &ValidateArgs) -> CliResult {
    let catalog = load_catalog(args.catalog.as_deref())?;
    let workflow = load_workflow(&args.workflow)?;
    let diagnostics = validate_all_with(&workflow, &catalog);
    let shown: Vec<_> = diagnostics.iter().filter(|d| args.warnings || d.is_error()).cloned().collect();
    if args.json {
        print!("{}", to_json_lines(&shown));
    } else {
        for d in &shown {
            println!("{d}");
        }
    }
    if has_errors(&diagnostics) {
        return Err(Failure::Findings(format!("{} has validation errors", args.workflow.display())));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    pub workflow: PathBuf,
    /// Mailbox seed (JSON) for the email tool.
    #[arg(long)]
    pub mailbox: Option<PathBuf>,
    /// Spreadsheet seed (JSON) for the spreadsheet tool.
    #[arg(long)]
    pub sheets: Option<PathBuf>,
    /// Directory the file tool is confined to. The run may modify it.
    #[arg(long)]
    pub fsroot: Option<PathBuf>,
    /// Enable the web and desktop automation stubs.
    #[arg(long)]
    pub ui: bool,
    #[arg(long, default_value_t = flowsmith_core::interp::DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    /// Skip Unknown steps instead of faulting on them.
    #[arg(long)]
    pub skip_unknown: bool,
    /// Where to write the execution report; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn exec(args: &ExecArgs) -> CliResult {
    let workflow = load_workflow(&args.workflow)?;
    let mut adapters = Adapters::new();
    if let Some(path) = &args.mailbox {
        adapters = adapters.with(MockMailbox::new(load_json::<MailboxSeed>(path)?));
    }
    if let Some(path) = &args.sheets {
        adapters = adapters.with(MockSpreadsheet::new(load_json::<SpreadsheetSeed>(path)?));
    }
    if let Some(dir) = &args.fsroot {
        if !dir.is_dir() {
            return Err(Failure::usage(format!("{} is not a directory", dir.display())));
        }
        adapters = adapters.with(SandboxFs::new(dir));
    }
    if args.ui {
        adapters = adapters.with(UiStub::web()).with(UiStub::desktop());
    }
    let limits = Limits { max_steps: args.max_steps, strict_unknown: !args.skip_unknown };
    let report = match Interpreter::new(&mut adapters).with_limits(limits).run(&workflow) {
        Ok(report) => report,
        Err(InterpError::Invalid(diagnostics)) => {
            for d in diagnostics.iter().filter(|d| d.is_error()) {
                println!("{d}");
            }
            return Err(Failure::Findings("refusing to run a workflow with validation errors".into()));
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    match &args.report {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    match (report.status, &report.error) {
        (ExecStatus::Faulted, Some(fault)) => Err(Failure::Findings(format!("run faulted: {fault}"))),
        (ExecStatus::Faulted, None) => Err(Failure::Findings("run faulted".into())),
        _ => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `*.sample.json` files.
    #[arg(long)]
    pub dataset: PathBuf,
    /// A standard configuration name, or `all`.
    #[arg(long, default_value = "all")]
    pub config: String,
    /// `live`, or `scripted:<dir>`; a sub-directory named after each configuration is used when present.
    #[arg(long, default_value = "live")]
    pub backend: BackendSpec,
    /// Directory of `<sample>.decisions.json` checkpoint scripts.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    /// JSON array of `{sampleId, bucket, notes}` human judgements; the report then uses them.
    #[arg(long)]
    pub manual_scores: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// json or csv; taken from the report extension when absent.
    #[arg(long)]
    pub format: Option<ReportFormat>,
}

fn load_decisions(dir: &Path) -> CliResult<BTreeMap<String, Script>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    let mut scripts = BTreeMap::new();
    for entry in entries.filter_map(Result::ok) {
        let path = entry.path();
        let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".decisions.json")) else {
            continue;
        };
        scripts.insert(id.to_string(), load_json::<Script>(&path)?);
    }
    Ok(scripts)
}

fn load_manual(path: &Path) -> CliResult<Vec<ScoreRecord>> {
    let values: Vec<serde_json::Value> = load_json(path)?;
    values
        .iter()
        .map(|v| {
            let id = v["sampleId"].as_str().ok_or_else(|| Failure::usage("manual score without `sampleId`"))?;
            let bucket = v["bucket"].as_f64().ok_or_else(|| Failure::usage("manual score without `bucket`"))?;
            score_record_manual(id, bucket, v["notes"].as_str().unwrap_or("")).map_err(Failure::usage)
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> CliResult {
    let samples = load_dataset(&args.dataset).map_err(|e| Failure::Findings(e.to_string()))?;
    let configs = if args.config == "all" {
        ExperimentConfig::standard_set()
    } else {
        vec![ExperimentConfig::by_name(&args.config)
            .ok_or_else(|| Failure::usage(format!("unknown configuration `{}`", args.config)))?]
    };
    let format = match args.format {
        Some(f) => f,
        None => match args.report.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        },
    };
    let scripts = match &args.decisions {
        Some(dir) => load_decisions(dir)?,
        None => BTreeMap::new(),
    };
    let manual = args.manual_scores.as_deref().map(load_manual).transpose()?;

    let mut reports: Vec<ExperimentReport> = Vec::new();
    for config in &configs {
        let client = LlmClient::new(args.backend.build(Some(&config.name))?).with_model(config.pipeline.model.clone());
        let report = run_experiment(&samples, config, &Pipeline::new(client), &scripts).map_err(Failure::usage)?;
        reports.push(match &manual {
            Some(m) => report.with_manual_scores(m),
            None => report,
        });
    }
    emit_report(&reports, format, &args.report).map_err(Failure::usage)?;
    println!("{:<24} {:<8} {:>9} {:>10} {:>10}", "config", "tier", "accuracy", "in tokens", "out tokens");
    for row in reports.iter().flat_map(|r| &r.rows) {
        println!(
            "{:<24} {:<8} {:>8.1}% {:>10.0} {:>10.0}",
            row.config,
            row.difficulty,
            row.accuracy,
            row.input_tokens,
            row.completion_tokens
        );
    }
    for r in &reports {
        for s in &r.samples {
            if let Some(note) = &s.score.note {
                eprintln!("{} {}: {note}", r.config, s.sample_id);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value = "live")]
    pub backend: BackendSpec,
    /// Directory where sessions are persisted; in-memory when absent.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Built UI bundle served under `/ui/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Root under which `execute` requests may name a file-tool directory.
    #[arg(long)]
    pub exec_root: Option<PathBuf>,
    /// Configuration for sessions created without one.
    #[arg(long, default_value = "full")]
    pub config: String,
}

pub fn serve(args: &ServeArgs) -> CliResult {
    let default_pipeline: PipelineConfig = ExperimentConfig::by_name(&args.config)
        .ok_or_else(|| Failure::usage(format!("unknown configuration `{}`", args.config)))?
        .pipeline;
    let mut pipeline = Pipeline::new(LlmClient::new(args.backend.build(None)?).with_model(default_pipeline.model.clone()));
    if let Some(dir) = &args.sessions {
        pipeline = pipeline.with_store(Arc::new(FileSessionStore::new(dir).map_err(Failure::usage)?));
    }
    let config = ServiceConfig { exec_root: args.exec_root.clone(), ui_dir: args.ui_dir.clone(), default_pipeline };
    let state = AppState::new(pipeline, config).map_err(Failure::usage)?;
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::usage)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::usage(format!("bind {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(Failure::usage)?);
        flowsmith_service::serve(listener, state).await.map_err(Failure::usage)
    })
}
