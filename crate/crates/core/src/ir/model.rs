use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::Value;

pub type StepId = String;

/// A complete workflow document: process metadata plus the step list.
#[derive(Debug, Clone, PartialEq)]
pub struct Workflow {
    pub id: String,
    pub name: String,
    pub description: String,
    pub parameters: BTreeMap<String, ContextEntry>,
    pub steps: Vec<Step>,
    pub default_start_step_id: StepId,
    pub context: BTreeMap<String, ContextEntry>,
}

impl Workflow {
    pub fn step(&self, id: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn step_mut(&mut self, id: &str) -> Option<&mut Step> {
        self.steps.iter_mut().find(|s| s.id == id)
    }

    pub fn step_index(&self, id: &str) -> Option<usize> {
        self.steps.iter().position(|s| s.id == id)
    }
}

/// Declared kind of a context variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContextType {
    String,
    Number,
    Boolean,
    List,
    Table,
    FileHandle,
}

impl ContextType {
    pub const ALL: [ContextType; 6] = [
        ContextType::String,
        ContextType::Number,
        ContextType::Boolean,
        ContextType::List,
        ContextType::Table,
        ContextType::FileHandle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextType::String => "string",
            ContextType::Number => "number",
            ContextType::Boolean => "boolean",
            ContextType::List => "list",
            ContextType::Table => "table",
            ContextType::FileHandle => "file-handle",
        }
    }

    /// Whether a non-null JSON value is of the kind this type declares.
    ///
    /// Tables accept an array of row objects or a single row object.
    pub fn accepts(self, value: &Value) -> bool {
        match (self, value) {
            (_, Value::Null) => true,
            (ContextType::String | ContextType::FileHandle, Value::String(_)) => true,
            (ContextType::Number, Value::Number(_)) => true,
            (ContextType::Boolean, Value::Bool(_)) => true,
            (ContextType::List, Value::Array(_)) => true,
            (ContextType::Table, Value::Object(_)) => true,
            (ContextType::Table, Value::Array(rows)) => rows.iter().all(Value::is_object),
            _ => false,
        }
    }
}

impl FromStr for ContextType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ContextType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    pub kind: ContextType,
    /// `Null` means unbound until runtime.
    pub value: Value,
    pub description: String,
}

impl ContextEntry {
    pub fn new(kind: ContextType, description: impl Into<String>) -> Self {
        ContextEntry { kind, value: Value::Null, description: description.into() }
    }

    pub fn with_value(mut self, value: Value) -> Self {
        self.value = value;
        self
    }
}

/// External service an API-type step talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tool {
    Outlook,
    Excel,
    File,
    Web,
    Desktop,
}

impl Tool {
    pub const ALL: [Tool; 5] = [Tool::Outlook, Tool::Excel, Tool::File, Tool::Web, Tool::Desktop];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Outlook => "Outlook",
            Tool::Excel => "Excel",
            Tool::File => "File",
            Tool::Web => "Web",
            Tool::Desktop => "Desktop",
        }
    }
}

impl FromStr for Tool {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Tool::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The value of a step's `type` key, collapsed to the seven step kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepType {
    Decision,
    Loop,
    Calculation,
    DataExtraction,
    Api(Tool),
    Exception,
    Unknown,
}

impl StepType {
    pub fn type_name(self) -> &'static str {
        match self {
            StepType::Decision => "Decision",
            StepType::Loop => "Loop",
            StepType::Calculation => "Calculation",
            StepType::DataExtraction => "DataExtraction",
            StepType::Api(tool) => tool.as_str(),
            StepType::Exception => "Exception",
            StepType::Unknown => "Unknown",
        }
    }
}

/// An infix expression over literals and `${var}` references, kept as source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expression(pub String);

impl Expression {
    pub fn new(text: impl Into<String>) -> Self {
        Expression(text.into())
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn parse(&self) -> Result<super::expr::Expr, super::expr::ExprError> {
        super::expr::parse_expression(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub id: StepId,
    pub name: String,
    pub description: String,
    pub kind: StepKind,
    pub next_step_id: Option<StepId>,
    /// Keys present in the document that the variant does not declare.
    pub extra: BTreeMap<String, Value>,
}

impl Step {
    pub fn step_type(&self) -> StepType {
        self.kind.step_type()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Decision(Decision),
    Loop(LoopStep),
    Calculation(Calculation),
    DataExtraction(DataExtraction),
    Api(ApiTask),
    Exception(ExceptionStep),
    Unknown(UnknownStep),
}

impl StepKind {
    pub fn step_type(&self) -> StepType {
        match self {
            StepKind::Decision(_) => StepType::Decision,
            StepKind::Loop(_) => StepType::Loop,
            StepKind::Calculation(_) => StepType::Calculation,
            StepKind::DataExtraction(_) => StepType::DataExtraction,
            StepKind::Api(api) => StepType::Api(api.tool),
            StepKind::Exception(_) => StepType::Exception,
            StepKind::Unknown(_) => StepType::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub condition: Option<Expression>,
    pub true_step_id: Option<StepId>,
    pub false_step_id: Option<StepId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    ForEach,
    While,
}

impl LoopMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopMode::ForEach => "ForEach",
            LoopMode::While => "While",
        }
    }
}

impl FromStr for LoopMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "ForEach" => Ok(LoopMode::ForEach),
            "While" => Ok(LoopMode::While),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopStep {
    pub mode: Option<LoopMode>,
    pub collection_variable: Option<String>,
    pub item_variable: Option<String>,
    pub condition: Option<Expression>,
    pub body_start_step_id: Option<StepId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Calculation {
    pub expression: Option<Expression>,
    pub output_variable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataExtraction {
    pub source_variable: Option<String>,
    pub extractions: Option<Vec<Extraction>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub field: String,
    pub output_variable: String,
    pub hint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiTask {
    pub tool: Tool,
    pub function: Option<String>,
    /// Values are usually strings with `${var}` interpolations; `null` marks a gap.
    pub parameters: BTreeMap<String, Value>,
    pub output_variable: Option<String>,
}

impl ApiTask {
    pub fn new(tool: Tool) -> Self {
        ApiTask { tool, function: None, parameters: BTreeMap::new(), output_variable: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExceptionFunction {
    TryBlock,
    CatchException,
    ThrowException,
    TerminateProcess,
}

impl ExceptionFunction {
    pub fn as_str(self) -> &'static str {
        match self {
            ExceptionFunction::TryBlock => "TryBlock",
            ExceptionFunction::CatchException => "CatchException",
            ExceptionFunction::ThrowException => "ThrowException",
            ExceptionFunction::TerminateProcess => "TerminateProcess",
        }
    }
}

impl FromStr for ExceptionFunction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "TryBlock" => Ok(ExceptionFunction::TryBlock),
            "CatchException" => Ok(ExceptionFunction::CatchException),
            "ThrowException" => Ok(ExceptionFunction::ThrowException),
            "TerminateProcess" => Ok(ExceptionFunction::TerminateProcess),
            _ => Err(()),
        }
    }
}

/// Exception step. Which optional fields are meaningful depends on `function`;
/// the validator reports the ones that are missing or undeclared.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExceptionStep {
    pub function: Option<ExceptionFunction>,
    pub try_start_step_id: Option<StepId>,
    pub catch_step_id: Option<StepId>,
    pub error_variable: Option<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnknownStep {
    /// The `type` string when the document used an unrecognised type name.
    /// In that case `parameters` holds every non-common key verbatim.
    pub original_type: Option<String>,
    pub raw_description: String,
    pub parameters: BTreeMap<String, Value>,
}
