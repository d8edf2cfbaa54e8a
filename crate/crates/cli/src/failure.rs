use std::fmt;
use std::process::ExitCode;

use flowsmith_core::pipeline::PipelineError;

/// How a command ended, mapped one-to-one onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: the workflow (or run) has findings of severity error.
    Findings(String),
    /// Exit 2: bad arguments or unreadable inputs.
    Usage(String),
    /// Exit 3: the language-model backend failed or could not be set up.
    Backend(String),
}

pub type CliResult<T = ()> = Result<T, Failure>;

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Findings(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Backend(_) => 3,
        })
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        Failure::Usage(message.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Findings(m) | Failure::Usage(m) => f.write_str(m),
            Failure::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(_) | PipelineError::SkeletonParse(_) | PipelineError::ModificationParse(_) => {
                Failure::Backend(e.to_string())
            }
            PipelineError::Validation(_) | PipelineError::UnknownQuestion { .. } | PipelineError::InvalidStage { .. } => {
                Failure::Usage(e.to_string())
            }
            PipelineError::Prompt(_) | PipelineError::Store(_) => Failure::Usage(e.to_string()),
        }
    }
}

pub fn read_text(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &std::path::Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}
