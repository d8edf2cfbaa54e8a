use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::PipelineSession;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed session document: {message}")]
    Format { path: String, message: String },
}

pub trait SessionStore: Send + Sync {
    fn save(&self, session: &PipelineSession) -> Result<(), StoreError>;
    fn load(&self, session_id: &str) -> Result<Option<PipelineSession>, StoreError>;
    /// All stored sessions, ordered by creation time.
    fn list(&self) -> Result<Vec<PipelineSession>, StoreError>;
}

/// One `<sessionId>.session.json` document per session. Writes go to a
/// temporary file that is then renamed over the target.
#[derive(Debug, Clone)]
pub struct FileSessionStore {
    dir: PathBuf,
}

const SUFFIX: &str = ".session.json";

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// Session ids are UUIDs; anything else cannot name a stored file.
fn safe_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
}

impl FileSessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        Ok(FileSessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}{SUFFIX}"))
    }

    fn read(path: &Path) -> Result<PipelineSession, StoreError> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        serde_json::from_str(&text)
            .map_err(|e| StoreError::Format { path: path.display().to_string(), message: e.to_string() })
    }
}

impl SessionStore for FileSessionStore {
    fn save(&self, session: &PipelineSession) -> Result<(), StoreError> {
        let target = self.path_of(&session.session_id);
        if !safe_id(&session.session_id) {
            return Err(StoreError::Format {
                path: target.display().to_string(),
                message: "session id is not a UUID".into(),
            });
        }
        let tmp = self.dir.join(format!(".{}{SUFFIX}.tmp", session.session_id));
        let mut text = serde_json::to_string_pretty(session).expect("session serialization is infallible");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io_error(&tmp))?;
        std::fs::rename(&tmp, &target).map_err(io_error(&target))
    }

    fn load(&self, session_id: &str) -> Result<Option<PipelineSession>, StoreError> {
        if !safe_id(session_id) {
            return Ok(None);
        }
        let path = self.path_of(session_id);
        if !path.exists() {
            return Ok(None);
        }
        Self::read(&path).map(Some)
    }

    fn list(&self) -> Result<Vec<PipelineSession>, StoreError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(io_error(&self.dir))? {
            let path = entry.map_err(io_error(&self.dir))?.path();
            let is_session = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(SUFFIX) && !n.starts_with('.'));
            if is_session {
                out.push(Self::read(&path)?);
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        Ok(out)
    }
}

#[derive(Debug, Default)]
pub struct MemorySessionStore {
    sessions: Mutex<BTreeMap<String, PipelineSession>>,
}

impl SessionStore for MemorySessionStore {
    fn save(&self, session: &PipelineSession) -> Result<(), StoreError> {
        self.sessions.lock().expect("store lock").insert(session.session_id.clone(), session.clone());
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<Option<PipelineSession>, StoreError> {
        Ok(self.sessions.lock().expect("store lock").get(session_id).cloned())
    }

    fn list(&self) -> Result<Vec<PipelineSession>, StoreError> {
        let mut out: Vec<_> = self.sessions.lock().expect("store lock").values().cloned().collect();
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        Ok(out)
    }
}
