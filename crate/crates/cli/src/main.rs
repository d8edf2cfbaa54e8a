//! `flowsmith`: synthesize, validate, execute and evaluate workflows.
//!
//! Exit codes: 0 success, 1 findings of severity error (in the workflow or
//! the run), 2 usage error, 3 language-model backend failure.

mod backend;
mod commands;
mod failure;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use backend::BackendSpec;
use commands::{EvalArgs, ExecArgs, ServeArgs, ValidateArgs};
use synth::SynthArgs;

#[derive(Debug, Parser)]
#[command(name = "flowsmith", version, about = "Synthesize, validate, execute and evaluate automation workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a natural-language request into a workflow.
    Synthesize {
        #[command(flatten)]
        args: SynthArgs,
        /// `live` (credentials from FLOWSMITH_API_KEY / FLOWSMITH_BASE_URL) or `scripted:<replay file or dir>`.
        #[arg(long, default_value = "live")]
        backend: BackendSpec,
    },
    /// Synthesize and save every language-model call as a replay store.
    Record {
        #[command(flatten)]
        args: SynthArgs,
        #[arg(long, default_value = "live")]
        backend: BackendSpec,
        #[arg(long)]
        store: PathBuf,
    },
    /// Synthesize from a replay store and check the token ledger against it.
    Replay {
        #[command(flatten)]
        args: SynthArgs,
        #[arg(long)]
        store: PathBuf,
    },
    /// Report validation findings, one per line.
    Validate(ValidateArgs),
    /// Run a workflow against mock tools and print the execution report.
    Exec(ExecArgs),
    /// Run dataset samples through one or all configurations and write a report.
    Eval(EvalArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synthesize { args, backend } => synth::synthesize(args, backend),
        Command::Record { args, backend, store } => synth::record(args, backend, store),
        Command::Replay { args, store } => synth::replay(args, store),
        Command::Validate(args) => commands::validate(args),
        Command::Exec(args) => commands::exec(args),
        Command::Eval(args) => commands::eval(args),
        Command::Serve(args) => commands::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("flowsmith: {failure}");
            failure.exit_code()
        }
    }
}
