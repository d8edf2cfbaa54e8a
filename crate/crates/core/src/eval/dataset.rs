use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ir::parse::workflow_from_value;
use crate::ir::Workflow;
use crate::validate::{has_errors, validate_all, Diagnostic};

pub const SAMPLE_SUFFIX: &str = ".sample.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub id: String,
    pub request: String,
    pub difficulty: Difficulty,
    pub gold: Workflow,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sample {sample_id}: {message}")]
    Format { sample_id: String, message: String },
    #[error("sample {sample_id}: gold workflow has {} validation error(s)", .diagnostics.iter().filter(|d| d.is_error()).count())]
    GoldInvalid { sample_id: String, diagnostics: Vec<Diagnostic> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFile {
    request: String,
    difficulty: Difficulty,
    gold: Value,
}

/// Parses one sample document and validates its gold.
pub fn parse_sample(sample_id: &str, text: &str) -> Result<DatasetSample, DatasetError> {
    let format = |message: String| DatasetError::Format { sample_id: sample_id.to_string(), message };
    let file: SampleFile = serde_json::from_str(text).map_err(|e| format(e.to_string()))?;
    let gold = workflow_from_value(&file.gold).map_err(|e| format(format!("gold: {e}")))?;
    let diagnostics = validate_all(&gold);
    if has_errors(&diagnostics) {
        return Err(DatasetError::GoldInvalid { sample_id: sample_id.to_string(), diagnostics });
    }
    Ok(DatasetSample { id: sample_id.to_string(), request: file.request, difficulty: file.difficulty, gold })
}

/// Loads every `<id>.sample.json` in `dir`, ordered by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetSample>, DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(SAMPLE_SUFFIX)) else {
            continue;
        };
        files.push((id.to_string(), path.clone()));
    }
    files.sort();
    files
        .into_iter()
        .map(|(id, path)| {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            parse_sample(&id, &text)
        })
        .collect()
}
