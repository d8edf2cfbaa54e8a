//! Deterministic stand-ins for the external tools.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::adapters::{count, optional_text, text, AdapterError, Params, ToolAdapter};
use crate::ir::Tool;

// ---- mailbox ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Email {
    pub id: String,
    #[serde(default = "inbox")]
    pub folder: String,
    #[serde(default)]
    pub from: String,
    #[serde(default)]
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<String>,
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub body: String,
    /// ISO-8601 timestamp.
    pub date: String,
    #[serde(default)]
    pub read: bool,
}

fn inbox() -> String {
    "Inbox".into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MailboxSeed {
    pub messages: Vec<Email>,
}

/// In-memory mailbox. Shared state, so a test can inspect it after a run.
#[derive(Debug, Clone, Default)]
pub struct MockMailbox {
    state: Arc<Mutex<MailboxSeed>>,
    sent: Arc<Mutex<Vec<Email>>>,
}

impl MockMailbox {
    pub fn new(seed: MailboxSeed) -> Self {
        MockMailbox { state: Arc::new(Mutex::new(seed)), sent: Arc::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn messages(&self) -> Vec<Email> {
        self.state.lock().expect("mailbox lock").messages.clone()
    }

    pub fn sent(&self) -> Vec<Email> {
        self.sent.lock().expect("mailbox lock").clone()
    }
}

impl ToolAdapter for MockMailbox {
    fn tool(&self) -> Tool {
        Tool::Outlook
    }

    fn functions(&self) -> &'static [&'static str] {
        &["ReadEmails", "SendEmail", "MoveEmail"]
    }

    fn call(&mut self, function: &str, params: &Params) -> Result<Value, AdapterError> {
        match function {
            // Most recent first; `count` limits the result.
            "ReadEmails" => {
                let folder = text(params, "folder")?;
                let limit = count(params, "count")?;
                let unread_only = matches!(params.get("unreadOnly"), Some(Value::Bool(true)));
                let state = self.state.lock().expect("mailbox lock");
                let mut found: Vec<&Email> = state
                    .messages
                    .iter()
                    .filter(|m| m.folder.eq_ignore_ascii_case(folder) && (!unread_only || !m.read))
                    .collect();
                found.sort_by(|a, b| b.date.cmp(&a.date).then_with(|| a.id.cmp(&b.id)));
                if let Some(n) = limit {
                    found.truncate(n);
                }
                Ok(serde_json::to_value(found).expect("emails serialize"))
            }
            "SendEmail" => {
                let mut sent = self.sent.lock().expect("mailbox lock");
                let email = Email {
                    id: format!("sent-{}", sent.len() + 1),
                    folder: "Sent".into(),
                    from: "me".into(),
                    to: text(params, "to")?.to_string(),
                    cc: optional_text(params, "cc"),
                    subject: optional_text(params, "subject").unwrap_or_default(),
                    body: text(params, "body")?.to_string(),
                    date: String::new(),
                    read: true,
                };
                let id = email.id.clone();
                sent.push(email);
                Ok(Value::String(id))
            }
            "MoveEmail" => {
                let id = text(params, "emailId")?;
                let dest = text(params, "destinationFolder")?;
                let mut state = self.state.lock().expect("mailbox lock");
                let email = state
                    .messages
                    .iter_mut()
                    .find(|m| m.id == id)
                    .ok_or_else(|| AdapterError::new(format!("no email with id `{id}`")))?;
                email.folder = dest.to_string();
                Ok(Value::Bool(true))
            }
            other => Err(AdapterError::new(format!("Outlook has no function `{other}`"))),
        }
    }
}

// ---- spreadsheet -----------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sheet {
    pub columns: Vec<String>,
    pub rows: Vec<BTreeMap<String, Value>>,
}

/// Workbook path -> sheet name -> sheet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadsheetSeed {
    pub workbooks: BTreeMap<String, BTreeMap<String, Sheet>>,
}

/// In-memory workbooks. `ReadWorkSheetRange` returns the sheet as a table (a
/// list of row records keyed by column header); `WriteWorkSheetCell`
/// addresses a cell by 1-based data row and column header, adding the column
/// when it is new.
#[derive(Debug, Clone, Default)]
pub struct MockSpreadsheet {
    state: Arc<Mutex<SpreadsheetSeed>>,
}

impl MockSpreadsheet {
    pub fn new(seed: SpreadsheetSeed) -> Self {
        MockSpreadsheet { state: Arc::new(Mutex::new(seed)) }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn sheet(&self, path: &str, sheet: &str) -> Option<Sheet> {
        self.state.lock().expect("sheet lock").workbooks.get(path)?.get(sheet).cloned()
    }
}

impl ToolAdapter for MockSpreadsheet {
    fn tool(&self) -> Tool {
        Tool::Excel
    }

    fn functions(&self) -> &'static [&'static str] {
        &["ReadWorkSheetRange", "WriteWorkSheetCell"]
    }

    fn call(&mut self, function: &str, params: &Params) -> Result<Value, AdapterError> {
        let path = text(params, "filePath")?;
        let name = text(params, "sheetName")?;
        let mut state = self.state.lock().expect("sheet lock");
        let sheet = state
            .workbooks
            .get_mut(path)
            .and_then(|b| b.get_mut(name))
            .ok_or_else(|| AdapterError::new(format!("no sheet `{name}` in `{path}`")))?;
        match function {
            "ReadWorkSheetRange" => Ok(Value::Array(
                sheet.rows.iter().map(|r| Value::Object(r.clone().into_iter().collect())).collect(),
            )),
            "WriteWorkSheetCell" => {
                let row = count(params, "row")?.ok_or_else(|| AdapterError::new("`row` is required"))?;
                let column = text(params, "column")?;
                if row == 0 || row > sheet.rows.len() {
                    return Err(AdapterError::new(format!("row {row} is outside 1..={}", sheet.rows.len())));
                }
                let value = params.get("value").cloned().unwrap_or(Value::Null);
                if !sheet.columns.iter().any(|c| c == column) {
                    sheet.columns.push(column.to_string());
                }
                sheet.rows[row - 1].insert(column.to_string(), value);
                Ok(Value::Bool(true))
            }
            other => Err(AdapterError::new(format!("Excel has no function `{other}`"))),
        }
    }
}

// ---- file system -----------------------------------------------------------

/// File operations confined to a root directory. Paths are relative to the
/// root; absolute paths and `..` are refused.
#[derive(Debug, Clone)]
pub struct SandboxFs {
    root: PathBuf,
}

impl SandboxFs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SandboxFs { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn resolve(&self, path: &str) -> Result<PathBuf, AdapterError> {
        let p = Path::new(path);
        let mut out = self.root.clone();
        for c in p.components() {
            match c {
                Component::Normal(part) => out.push(part),
                Component::CurDir => {}
                _ => return Err(AdapterError::new(format!("path `{path}` leaves the sandbox"))),
            }
        }
        Ok(out)
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn io(path: &str) -> impl FnOnce(std::io::Error) -> AdapterError + '_ {
    move |e| AdapterError::new(format!("{path}: {e}"))
}

impl ToolAdapter for SandboxFs {
    fn tool(&self) -> Tool {
        Tool::File
    }

    fn functions(&self) -> &'static [&'static str] {
        &["ReadFile", "WriteFile", "ListFiles", "MoveFile", "CreateFolder", "FolderExists", "FileExists"]
    }

    fn call(&mut self, function: &str, params: &Params) -> Result<Value, AdapterError> {
        match function {
            "ReadFile" => {
                let path = text(params, "path")?;
                Ok(Value::String(std::fs::read_to_string(self.resolve(path)?).map_err(io(path))?))
            }
            "WriteFile" => {
                let path = text(params, "path")?;
                let target = self.resolve(path)?;
                if let Some(parent) = target.parent() {
                    std::fs::create_dir_all(parent).map_err(io(path))?;
                }
                let content = optional_text(params, "content").unwrap_or_default();
                std::fs::write(target, content).map_err(io(path))?;
                Ok(Value::Bool(true))
            }
            // Files directly inside the folder, sorted, as root-relative paths.
            "ListFiles" => {
                let folder = text(params, "folder")?;
                let mut files = Vec::new();
                for entry in std::fs::read_dir(self.resolve(folder)?).map_err(io(folder))? {
                    let path = entry.map_err(io(folder))?.path();
                    if path.is_file() {
                        files.push(self.relative(&path));
                    }
                }
                files.sort();
                Ok(json!(files))
            }
            // Moving onto an existing folder moves into it.
            "MoveFile" => {
                let source = text(params, "source")?;
                let destination = text(params, "destination")?;
                let from = self.resolve(source)?;
                let mut to = self.resolve(destination)?;
                if to.is_dir() {
                    to.push(from.file_name().ok_or_else(|| AdapterError::new("source has no file name"))?);
                }
                if let Some(parent) = to.parent() {
                    std::fs::create_dir_all(parent).map_err(io(destination))?;
                }
                std::fs::rename(&from, &to).map_err(io(source))?;
                Ok(Value::String(self.relative(&to)))
            }
            "CreateFolder" => {
                let path = text(params, "path")?;
                std::fs::create_dir_all(self.resolve(path)?).map_err(io(path))?;
                Ok(Value::Bool(true))
            }
            "FolderExists" => Ok(Value::Bool(self.resolve(text(params, "path")?)?.is_dir())),
            "FileExists" => Ok(Value::Bool(self.resolve(text(params, "path")?)?.is_file())),
            other => Err(AdapterError::new(format!("File has no function `{other}`"))),
        }
    }
}

// ---- web and desktop -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiAction {
    pub function: String,
    pub params: Params,
}

/// Records browser or desktop interactions; `ReadText` answers from a
/// scripted selector table (empty text when unscripted).
#[derive(Debug, Clone)]
pub struct UiStub {
    tool: Tool,
    texts: BTreeMap<String, String>,
    log: Arc<Mutex<Vec<UiAction>>>,
}

impl UiStub {
    pub fn web() -> Self {
        UiStub { tool: Tool::Web, texts: BTreeMap::new(), log: Arc::default() }
    }

    pub fn desktop() -> Self {
        UiStub { tool: Tool::Desktop, texts: BTreeMap::new(), log: Arc::default() }
    }

    pub fn with_text(mut self, selector: impl Into<String>, text: impl Into<String>) -> Self {
        self.texts.insert(selector.into(), text.into());
        self
    }

    pub fn log(&self) -> Vec<UiAction> {
        self.log.lock().expect("ui log lock").clone()
    }
}

impl ToolAdapter for UiStub {
    fn tool(&self) -> Tool {
        self.tool
    }

    fn functions(&self) -> &'static [&'static str] {
        match self.tool {
            Tool::Web => &["OpenUrl", "ClickSelector", "WriteIn", "ReadText"],
            _ => &["OpenApplication", "ClickSelector", "WriteIn", "ReadText"],
        }
    }

    fn call(&mut self, function: &str, params: &Params) -> Result<Value, AdapterError> {
        let required: &[&str] = match function {
            "OpenUrl" if self.tool == Tool::Web => &["url"],
            "OpenApplication" if self.tool == Tool::Desktop => &["application"],
            "ClickSelector" | "ReadText" => &["selector"],
            "WriteIn" => &["selector", "text"],
            other => return Err(AdapterError::new(format!("{} has no function `{other}`", self.tool))),
        };
        for name in required {
            text(params, name)?;
        }
        self.log.lock().expect("ui log lock").push(UiAction { function: function.to_string(), params: params.clone() });
        match function {
            "ReadText" => Ok(Value::String(self.texts.get(text(params, "selector")?).cloned().unwrap_or_default())),
            _ => Ok(Value::Bool(true)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::EssentialCatalog;

    #[test]
    fn function_tables_match_catalog() {
        let adapters: Vec<Box<dyn ToolAdapter>> = vec![
            Box::new(MockMailbox::default()),
            Box::new(MockSpreadsheet::default()),
            Box::new(SandboxFs::new("/nonexistent")),
            Box::new(UiStub::web()),
            Box::new(UiStub::desktop()),
        ];
        let catalog = EssentialCatalog::builtin();
        for a in adapters {
            let mut mine: Vec<&str> = a.functions().to_vec();
            let mut theirs: Vec<&str> = catalog.functions(a.tool()).collect();
            mine.sort();
            theirs.sort();
            assert_eq!(mine, theirs, "{}", a.tool());
        }
    }

    #[test]
    fn mailbox_reads_most_recent_first() {
        let seed: MailboxSeed = serde_json::from_value(json!({"messages": [
            {"id": "a", "date": "2024-01-01T09:00:00Z"},
            {"id": "b", "date": "2024-03-01T09:00:00Z"},
            {"id": "c", "date": "2024-02-01T09:00:00Z", "folder": "Archive"},
        ]}))
        .unwrap();
        let mut mb = MockMailbox::new(seed);
        let params = Params::from([("folder".into(), json!("inbox")), ("count".into(), json!("1"))]);
        let got = mb.call("ReadEmails", &params).unwrap();
        assert_eq!(got.as_array().unwrap().len(), 1);
        assert_eq!(got[0]["id"], "b");
        assert!(mb.call("SendEmail", &Params::from([("to".into(), json!("x"))])).is_err());
    }

    #[test]
    fn sandbox_refuses_escape() {
        let dir = tempfile::tempdir().unwrap();
        let mut fs = SandboxFs::new(dir.path());
        let p = |k: &str, v: &str| Params::from([(k.to_string(), json!(v))]);
        assert!(fs.call("ReadFile", &p("path", "../etc/passwd")).is_err());
        assert!(fs.call("ReadFile", &p("path", "/etc/passwd")).is_err());
        fs.call("WriteFile", &Params::from([("path".into(), json!("in/a.txt")), ("content".into(), json!("hi"))]))
            .unwrap();
        assert_eq!(fs.call("ListFiles", &p("folder", "in")).unwrap(), json!(["in/a.txt"]));
        assert_eq!(fs.call("FolderExists", &p("path", "out")).unwrap(), json!(false));
        fs.call("CreateFolder", &p("path", "out")).unwrap();
        let moved = fs
            .call("MoveFile", &Params::from([("source".into(), json!("in/a.txt")), ("destination".into(), json!("out"))]))
            .unwrap();
        assert_eq!(moved, json!("out/a.txt"));
        assert_eq!(fs.call("ReadFile", &p("path", "out/a.txt")).unwrap(), json!("hi"));
    }

    #[test]
    fn spreadsheet_write_back_adds_column() {
        let seed: SpreadsheetSeed = serde_json::from_value(json!({"workbooks": {"hr.xlsx": {"Staff": {
            "columns": ["Name"], "rows": [{"Name": "Ann"}]
        }}}}))
        .unwrap();
        let mut xl = MockSpreadsheet::new(seed);
        let mut params = Params::from([
            ("filePath".into(), json!("hr.xlsx")),
            ("sheetName".into(), json!("Staff")),
            ("row".into(), json!(1)),
            ("column".into(), json!("Bonus ($)")),
            ("value".into(), json!(12.5)),
        ]);
        xl.call("WriteWorkSheetCell", &params).unwrap();
        let sheet = xl.sheet("hr.xlsx", "Staff").unwrap();
        assert_eq!(sheet.columns, vec!["Name", "Bonus ($)"]);
        assert_eq!(sheet.rows[0]["Bonus ($)"], json!(12.5));
        params.insert("row".into(), json!(2));
        assert!(xl.call("WriteWorkSheetCell", &params).is_err());
    }
}
