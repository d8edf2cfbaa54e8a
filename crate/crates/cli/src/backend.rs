use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use flowsmith_core::llm::{load_replay, ChatBackend, LiveBackend, ReplayBackend, ReplayStore};

use crate::failure::{CliResult, Failure};

/// `live` or `scripted:<path>`, where the path is one replay file or a
/// directory of `*.replay.json` files that are merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Scripted(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            _ if s == "live" => Ok(BackendSpec::Live),
            Some(("scripted", path)) if !path.is_empty() => Ok(BackendSpec::Scripted(PathBuf::from(path))),
            _ => Err(format!("expected `live` or `scripted:<path>`, got `{s}`")),
        }
    }
}

pub fn load_store(path: &Path) -> CliResult<ReplayStore> {
    let bad = |e: &dyn std::fmt::Display| Failure::usage(format!("replay store {}: {e}", path.display()));
    if !path.is_dir() {
        return load_replay(path).map_err(|e| bad(&e));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| bad(&e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|n| n.ends_with(".replay.json")))
        .collect();
    files.sort();
    let mut store = ReplayStore::default();
    for f in files {
        store.merge(load_replay(&f).map_err(|e| bad(&e))?);
    }
    Ok(store)
}

impl BackendSpec {
    /// Builds the backend. For `eval`, a scripted directory holding a
    /// sub-directory named after the configuration uses that sub-directory.
    pub fn build(&self, config_name: Option<&str>) -> CliResult<Arc<dyn ChatBackend>> {
        match self {
            BackendSpec::Live => Ok(Arc::new(LiveBackend::from_env().map_err(Failure::Backend)?)),
            BackendSpec::Scripted(path) => {
                let path = match config_name.map(|c| path.join(c)) {
                    Some(sub) if sub.is_dir() => sub,
                    _ => path.clone(),
                };
                Ok(Arc::new(ReplayBackend::new(load_store(&path)?)))
            }
        }
    }
}
