//! Workflow interpreter.
//!
//! Execution starts at `defaultStartStepId` and follows `nextStepId` links.
//! A chain that ends with a null `nextStepId` returns to whatever encloses
//! it: a loop body returns to its loop header, a try or catch chain continues
//! after its TryBlock, and the top-level chain ends the run. These are the
//! same continuation rules the validator's flow graph uses.
//!
//! Tool failures and ThrowException steps raise an error that the innermost
//! enclosing TryBlock routes to its catch step. Unbound variables, type
//! faults and missing parameters are faults, which end the run and cannot be
//! caught.

mod adapters;
mod eval;
mod extract;
pub mod mocks;

pub use adapters::{AdapterError, Adapters, Params, ToolAdapter};
pub use eval::{eval_expression, number, EvalError};
pub use extract::{Extracted, Extractor, ExtractorUnavailable, RuleExtractor};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ir::vars::{interpolate, sole_reference, TemplateError};
use crate::ir::{ExceptionFunction, LoopMode, Step, StepKind, Tool, Workflow};
use crate::validate::{has_errors, validate_all_with, Diagnostic, EssentialCatalog};

pub const DEFAULT_MAX_STEPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Limits {
    pub max_steps: u64,
    /// Fault on Unknown steps (default) instead of skipping them.
    pub strict_unknown: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_steps: DEFAULT_MAX_STEPS, strict_unknown: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ExecStatus {
    Completed,
    Terminated,
    Faulted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome")]
pub enum Outcome {
    Called { tool: Tool, function: String, result: Value },
    Assigned { variable: String, value: Value },
    Extracted { values: BTreeMap<String, Value> },
    Branched { condition: bool },
    /// A loop header starting pass `index` (zero-based).
    LoopIteration { index: usize },
    LoopFinished { iterations: usize },
    TryEntered,
    Raised { message: String },
    Caught { message: String },
    Terminated { message: String },
    Skipped,
    Faulted { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub step_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase", tag = "fault")]
pub enum ExecFault {
    #[error("step limit of {limit} exceeded")]
    StepLimitExceeded { limit: u64 },
    #[error("no adapter for tool {tool}")]
    AdapterMissing { tool: Tool },
    #[error("uncaught exception: {message}")]
    UncaughtException { message: String },
    #[error("{step_id}: essential parameter `{parameter}` is empty at call time")]
    MissingParameter { step_id: String, parameter: String },
    #[error("variable `{name}` is not bound")]
    UnboundVariable { name: String },
    #[error("type fault: {message}")]
    TypeFault { message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{step_id}: Unknown steps cannot be executed")]
    UnknownStep { step_id: String },
    #[error("{step_id}: {message}")]
    Malformed { step_id: String, message: String },
    #[error("{0}")]
    Extractor(String),
}

impl From<EvalError> for ExecFault {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnboundVariable(name) => ExecFault::UnboundVariable { name },
            EvalError::TypeFault(message) => ExecFault::TypeFault { message },
            EvalError::DivisionByZero => ExecFault::DivisionByZero,
        }
    }
}

impl From<TemplateError> for ExecFault {
    fn from(e: TemplateError) -> Self {
        match e {
            TemplateError::UnboundVariable(name) => ExecFault::UnboundVariable { name },
            other => ExecFault::TypeFault { message: other.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionReport {
    pub status: ExecStatus,
    pub steps_executed: u64,
    pub final_context: BTreeMap<String, Value>,
    pub trace: Vec<TraceEntry>,
    pub error: Option<ExecFault>,
}

impl ExecutionReport {
    /// Trace entries of one step, in execution order.
    pub fn entries_for<'a>(&'a self, step_id: &'a str) -> impl Iterator<Item = &'a TraceEntry> + 'a {
        self.trace.iter().filter(move |t| t.step_id == step_id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InterpError {
    /// The workflow has validation errors and is not executed.
    #[error("workflow has {} validation error(s)", .0.iter().filter(|d| d.is_error()).count())]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone)]
enum Frame {
    ForEach { header: usize, items: Vec<Value>, next: usize, var: String },
    While { header: usize, passes: usize },
    /// `catching` is true while the try chain runs, false in the catch chain.
    Try { header: usize, catching: bool },
}

impl Frame {
    fn header(&self) -> usize {
        match self {
            Frame::ForEach { header, .. } | Frame::While { header, .. } | Frame::Try { header, .. } => *header,
        }
    }
}

enum Flow {
    Goto(Option<usize>),
    Raise(String),
    Terminate,
}

/// Runs workflows against a set of adapters.
pub struct Interpreter<'a> {
    adapters: &'a mut Adapters,
    extractor: Box<dyn Extractor + 'a>,
    limits: Limits,
    catalog: &'a EssentialCatalog,
}

/// Validates `w`, then executes it with the rule-based extractor.
pub fn execute(w: &Workflow, adapters: &mut Adapters, limits: Limits) -> Result<ExecutionReport, InterpError> {
    Interpreter::new(adapters).with_limits(limits).run(w)
}

impl<'a> Interpreter<'a> {
    pub fn new(adapters: &'a mut Adapters) -> Self {
        Interpreter {
            adapters,
            extractor: Box::new(RuleExtractor),
            limits: Limits::default(),
            catalog: EssentialCatalog::builtin(),
        }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_extractor(mut self, extractor: impl Extractor + 'a) -> Self {
        self.extractor = Box::new(extractor);
        self
    }

    pub fn with_catalog(mut self, catalog: &'a EssentialCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    /// Executes after checking that the validator reports no errors.
    pub fn run(&mut self, w: &Workflow) -> Result<ExecutionReport, InterpError> {
        let diagnostics = validate_all_with(w, self.catalog);
        if has_errors(&diagnostics) {
            return Err(InterpError::Invalid(diagnostics));
        }
        Ok(self.run_unchecked(w))
    }

    /// Executes without validation; defects surface as runtime faults.
    pub fn run_unchecked(&mut self, w: &Workflow) -> ExecutionReport {
        Run::new(self, w).go()
    }
}

struct Run<'r, 'a> {
    it: &'r mut Interpreter<'a>,
    w: &'r Workflow,
    index: HashMap<&'r str, usize>,
    bindings: BTreeMap<String, Value>,
    frames: Vec<Frame>,
    trace: Vec<TraceEntry>,
    pending_error: Option<String>,
    executed: u64,
}

impl<'r, 'a> Run<'r, 'a> {
    fn new(it: &'r mut Interpreter<'a>, w: &'r Workflow) -> Self {
        let mut index = HashMap::new();
        for (i, s) in w.steps.iter().enumerate() {
            index.entry(s.id.as_str()).or_insert(i);
        }
        let bindings = w
            .parameters
            .iter()
            .chain(&w.context)
            .filter(|(_, e)| !e.value.is_null())
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect();
        Run { it, w, index, bindings, frames: Vec::new(), trace: Vec::new(), pending_error: None, executed: 0 }
    }

    fn report(self, status: ExecStatus, error: Option<ExecFault>) -> ExecutionReport {
        ExecutionReport { status, steps_executed: self.executed, final_context: self.bindings, trace: self.trace, error }
    }

    fn fault(mut self, step_id: &str, fault: ExecFault) -> ExecutionReport {
        self.trace.push(TraceEntry {
            step_id: step_id.to_string(),
            outcome: Outcome::Faulted { message: fault.to_string() },
            warnings: Vec::new(),
        });
        self.report(ExecStatus::Faulted, Some(fault))
    }

    fn resolve(&self, from: &Step, id: Option<&str>) -> Result<Option<usize>, ExecFault> {
        match id {
            None => Ok(None),
            Some(id) => self.index.get(id).copied().map(Some).ok_or_else(|| ExecFault::Malformed {
                step_id: from.id.clone(),
                message: format!("links to missing step `{id}`"),
            }),
        }
    }

    fn drop_frame(&mut self, frame: &Frame) {
        if let Frame::ForEach { var, .. } = frame {
            self.bindings.remove(var);
        }
    }

    /// Where control goes after a chain ends.
    fn continuation(&mut self) -> Result<Option<usize>, ExecFault> {
        loop {
            match self.frames.last() {
                None => return Ok(None),
                Some(Frame::ForEach { header, .. } | Frame::While { header, .. }) => return Ok(Some(*header)),
                Some(Frame::Try { header, .. }) => {
                    let header = *header;
                    self.frames.pop();
                    let step = &self.w.steps[header];
                    if let Some(n) = self.resolve(step, step.next_step_id.as_deref())? {
                        return Ok(Some(n));
                    }
                }
            }
        }
    }

    fn next_of(&mut self, step: &Step) -> Result<Option<usize>, ExecFault> {
        match self.resolve(step, step.next_step_id.as_deref())? {
            Some(n) => Ok(Some(n)),
            None => self.continuation(),
        }
    }

    /// Re-entering a construct already on the stack discards the frames above it.
    fn reenter(&mut self, header: usize) -> bool {
        match self.frames.iter().rposition(|f| f.header() == header) {
            Some(p) => {
                for f in self.frames.split_off(p + 1) {
                    self.drop_frame(&f);
                }
                true
            }
            None => false,
        }
    }

    fn go(mut self) -> ExecutionReport {
        let w = self.w;
        let mut current = match self.index.get(w.default_start_step_id.as_str()) {
            Some(&i) => Some(i),
            None if w.steps.is_empty() => None,
            None => {
                let fault = ExecFault::Malformed {
                    step_id: w.default_start_step_id.clone(),
                    message: "start step does not exist".into(),
                };
                return self.fault("-", fault);
            }
        };
        while let Some(at) = current {
            let step = &w.steps[at];
            if self.executed >= self.it.limits.max_steps {
                let limit = self.it.limits.max_steps;
                return self.fault(&step.id, ExecFault::StepLimitExceeded { limit });
            }
            self.executed += 1;
            let flow = match self.step(at, step) {
                Ok(flow) => flow,
                Err(fault) => return self.fault(&step.id, fault),
            };
            current = match flow {
                Flow::Goto(next) => next,
                Flow::Terminate => return self.report(ExecStatus::Terminated, None),
                Flow::Raise(message) => match self.raise(&step.id, message) {
                    Ok(next) => Some(next),
                    Err(fault) => return self.fault(&step.id, fault),
                },
            };
        }
        self.report(ExecStatus::Completed, None)
    }

    /// Unwinds to the innermost TryBlock still in its try chain.
    fn raise(&mut self, step_id: &str, message: String) -> Result<usize, ExecFault> {
        while let Some(frame) = self.frames.pop() {
            self.drop_frame(&frame);
            if let Frame::Try { header, catching: true } = frame {
                let try_step = &self.w.steps[header];
                let StepKind::Exception(e) = &try_step.kind else { unreachable!("try frames come from TryBlock steps") };
                let catch = self.resolve(try_step, e.catch_step_id.as_deref())?.ok_or_else(|| ExecFault::Malformed {
                    step_id: try_step.id.clone(),
                    message: "TryBlock has no catch step".into(),
                })?;
                self.frames.push(Frame::Try { header, catching: false });
                self.pending_error = Some(message);
                return Ok(catch);
            }
        }
        let _ = step_id;
        Err(ExecFault::UncaughtException { message })
    }

    fn log(&mut self, step: &Step, outcome: Outcome) {
        self.trace.push(TraceEntry { step_id: step.id.clone(), outcome, warnings: Vec::new() });
    }

    fn render(&self, template: &str) -> Result<Value, ExecFault> {
        match sole_reference(template) {
            Some(name) => self.bindings.get(name).cloned().ok_or(ExecFault::UnboundVariable { name: name.to_string() }),
            None => Ok(Value::String(interpolate(template, &self.bindings)?)),
        }
    }

    fn eval(&self, step: &Step, expr: Option<&crate::ir::Expression>) -> Result<Value, ExecFault> {
        let expr = expr.ok_or_else(|| ExecFault::Malformed { step_id: step.id.clone(), message: "missing expression".into() })?;
        let parsed = expr
            .parse()
            .map_err(|e| ExecFault::Malformed { step_id: step.id.clone(), message: format!("bad expression: {e}") })?;
        Ok(eval_expression(&parsed, &self.bindings)?)
    }

    fn condition(&self, step: &Step, expr: Option<&crate::ir::Expression>) -> Result<bool, ExecFault> {
        match self.eval(step, expr)? {
            Value::Bool(b) => Ok(b),
            other => Err(ExecFault::TypeFault { message: format!("{}: condition evaluated to {other}", step.id) }),
        }
    }

    fn required<'s>(step: &Step, v: Option<&'s String>, what: &str) -> Result<&'s str, ExecFault> {
        v.map(String::as_str)
            .ok_or_else(|| ExecFault::Malformed { step_id: step.id.clone(), message: format!("missing {what}") })
    }

    fn step(&mut self, at: usize, step: &'r Step) -> Result<Flow, ExecFault> {
        match &step.kind {
            StepKind::Decision(d) => {
                let taken = self.condition(step, d.condition.as_ref())?;
                self.log(step, Outcome::Branched { condition: taken });
                let target = if taken { &d.true_step_id } else { &d.false_step_id };
                match self.resolve(step, target.as_deref())? {
                    Some(n) => Ok(Flow::Goto(Some(n))),
                    None => Ok(Flow::Goto(self.continuation()?)),
                }
            }
            StepKind::Loop(l) => self.loop_step(at, step, l),
            StepKind::Calculation(c) => {
                let value = self.eval(step, c.expression.as_ref())?;
                let var = Self::required(step, c.output_variable.as_ref(), "outputVariable")?.to_string();
                self.bindings.insert(var.clone(), value.clone());
                self.log(step, Outcome::Assigned { variable: var, value });
                Ok(Flow::Goto(self.next_of(step)?))
            }
            StepKind::DataExtraction(d) => {
                let source_name = Self::required(step, d.source_variable.as_ref(), "sourceVariable")?;
                let source = match self.bindings.get(source_name) {
                    None => return Err(ExecFault::UnboundVariable { name: source_name.to_string() }),
                    Some(Value::String(s)) => s.clone(),
                    Some(other) => {
                        return Err(ExecFault::TypeFault {
                            message: format!("extraction source `{source_name}` holds {other}, not text"),
                        })
                    }
                };
                let extracted = self
                    .it
                    .extractor
                    .extract(&source, d.extractions.as_deref().unwrap_or_default())
                    .map_err(|e| ExecFault::Extractor(e.to_string()))?;
                self.bindings.extend(extracted.values.clone());
                self.trace.push(TraceEntry {
                    step_id: step.id.clone(),
                    outcome: Outcome::Extracted { values: extracted.values },
                    warnings: extracted.warnings,
                });
                Ok(Flow::Goto(self.next_of(step)?))
            }
            StepKind::Api(api) => {
                let function = Self::required(step, api.function.as_ref(), "function")?;
                let mut params = Params::new();
                for (k, v) in &api.parameters {
                    let value = match v {
                        Value::String(s) => self.render(s)?,
                        other => other.clone(),
                    };
                    params.insert(k.clone(), value);
                }
                for p in self.it.catalog.essentials(api.tool, function).unwrap_or_default() {
                    let gap = match params.get(p) {
                        None | Some(Value::Null) => true,
                        Some(Value::String(s)) => s.is_empty(),
                        _ => false,
                    };
                    if gap {
                        return Err(ExecFault::MissingParameter { step_id: step.id.clone(), parameter: p.clone() });
                    }
                }
                let adapter = self.it.adapters.get_mut(api.tool).ok_or(ExecFault::AdapterMissing { tool: api.tool })?;
                match adapter.call(function, &params) {
                    Ok(result) => {
                        if let Some(var) = &api.output_variable {
                            self.bindings.insert(var.clone(), result.clone());
                        }
                        self.log(step, Outcome::Called { tool: api.tool, function: function.to_string(), result });
                        Ok(Flow::Goto(self.next_of(step)?))
                    }
                    Err(e) => {
                        let message = format!("{}.{function}: {e}", api.tool);
                        self.log(step, Outcome::Raised { message: message.clone() });
                        Ok(Flow::Raise(message))
                    }
                }
            }
            StepKind::Exception(e) => match e.function {
                Some(ExceptionFunction::TryBlock) => {
                    if !self.reenter(at) {
                        self.frames.push(Frame::Try { header: at, catching: true });
                    } else if let Some(Frame::Try { catching, .. }) = self.frames.last_mut() {
                        *catching = true;
                    }
                    self.log(step, Outcome::TryEntered);
                    match self.resolve(step, e.try_start_step_id.as_deref())? {
                        Some(n) => Ok(Flow::Goto(Some(n))),
                        None => Ok(Flow::Goto(self.continuation()?)),
                    }
                }
                Some(ExceptionFunction::CatchException) => {
                    let message = self.pending_error.take();
                    if let (Some(var), Some(msg)) = (&e.error_variable, &message) {
                        self.bindings.insert(var.clone(), Value::String(msg.clone()));
                    }
                    self.log(step, Outcome::Caught { message: message.unwrap_or_default() });
                    Ok(Flow::Goto(self.next_of(step)?))
                }
                Some(ExceptionFunction::ThrowException) => {
                    let message = crate::ir::vars::render_value(&self.render(e.message.as_deref().unwrap_or(""))?);
                    self.log(step, Outcome::Raised { message: message.clone() });
                    Ok(Flow::Raise(message))
                }
                Some(ExceptionFunction::TerminateProcess) => {
                    let message = crate::ir::vars::render_value(&self.render(e.message.as_deref().unwrap_or(""))?);
                    self.log(step, Outcome::Terminated { message });
                    Ok(Flow::Terminate)
                }
                None => Err(ExecFault::Malformed { step_id: step.id.clone(), message: "missing function".into() }),
            },
            StepKind::Unknown(_) => {
                if self.it.limits.strict_unknown {
                    return Err(ExecFault::UnknownStep { step_id: step.id.clone() });
                }
                self.log(step, Outcome::Skipped);
                Ok(Flow::Goto(self.next_of(step)?))
            }
        }
    }

    fn loop_step(&mut self, at: usize, step: &'r Step, l: &'r crate::ir::LoopStep) -> Result<Flow, ExecFault> {
        let body = self.resolve(step, l.body_start_step_id.as_deref())?;
        let body = body.ok_or_else(|| ExecFault::Malformed { step_id: step.id.clone(), message: "loop has no body".into() })?;
        let resumed = self.reenter(at);
        let proceed = match l.mode {
            Some(LoopMode::ForEach) => {
                if !resumed {
                    let name = Self::required(step, l.collection_variable.as_ref(), "collectionVariable")?;
                    let var = Self::required(step, l.item_variable.as_ref(), "itemVariable")?.to_string();
                    let items = match self.bindings.get(name) {
                        None => return Err(ExecFault::UnboundVariable { name: name.to_string() }),
                        Some(Value::Array(items)) => items.clone(),
                        Some(other) => {
                            return Err(ExecFault::TypeFault { message: format!("`{name}` holds {other}, not a list") })
                        }
                    };
                    self.frames.push(Frame::ForEach { header: at, items, next: 0, var });
                }
                let Some(Frame::ForEach { items, next, var, .. }) = self.frames.last_mut() else {
                    unreachable!("the loop's own frame is on top")
                };
                if *next < items.len() {
                    let (index, item, var) = (*next, items[*next].clone(), var.clone());
                    *next += 1;
                    self.bindings.insert(var, item);
                    Some(index)
                } else {
                    None
                }
            }
            Some(LoopMode::While) => {
                if !resumed {
                    self.frames.push(Frame::While { header: at, passes: 0 });
                }
                let go = self.condition(step, l.condition.as_ref())?;
                let Some(Frame::While { passes, .. }) = self.frames.last_mut() else {
                    unreachable!("the loop's own frame is on top")
                };
                if go {
                    *passes += 1;
                    Some(*passes - 1)
                } else {
                    None
                }
            }
            None => return Err(ExecFault::Malformed { step_id: step.id.clone(), message: "loop has no mode".into() }),
        };
        match proceed {
            Some(index) => {
                self.log(step, Outcome::LoopIteration { index });
                Ok(Flow::Goto(Some(body)))
            }
            None => {
                let frame = self.frames.pop().expect("loop frame present");
                let iterations = match &frame {
                    Frame::ForEach { items, .. } => items.len(),
                    Frame::While { passes, .. } => *passes,
                    Frame::Try { .. } => unreachable!("loop frames only"),
                };
                self.drop_frame(&frame);
                self.log(step, Outcome::LoopFinished { iterations });
                Ok(Flow::Goto(self.next_of(step)?))
            }
        }
    }
}
