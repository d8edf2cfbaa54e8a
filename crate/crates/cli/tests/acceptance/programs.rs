//! Random structured programs, their compilation to flat workflows, and a
//! tree-walking simulator that serves as the interpreter's oracle.
//!
//! The simulator never looks at step links: it runs the nested program
//! directly with Rust control flow, so agreement with the interpreter checks
//! the continuation rules (loop bodies returning to their header, try and
//! catch chains resuming after their TryBlock, unwinding through loops).

use std::collections::BTreeMap;

use flowsmith_core::interp::{ExecStatus, ExecutionReport};
use flowsmith_core::ir::{
    Calculation, ContextEntry, ContextType, Decision, ExceptionFunction, ExceptionStep, Expression, LoopMode, LoopStep,
    Step, StepKind, Workflow,
};
use proptest::collection::vec;
use proptest::prelude::*;
use serde_json::{json, Value};

const MODULUS: i64 = 1_000_003;

#[derive(Debug, Clone)]
pub enum Stmt {
    /// `acc = (acc * 7 + k) % MODULUS`
    Add(i64),
    /// Folds the innermost loop item into `acc` (zero outside loops).
    AddItem,
    /// Branches on `acc % m < t`.
    If { m: i64, t: i64, then: Vec<Stmt>, other: Vec<Stmt> },
    ForEach { items: Vec<i64>, body: Vec<Stmt> },
    Try { body: Vec<Stmt>, handler: Vec<Stmt> },
    Throw,
    Terminate,
}

pub fn program() -> impl Strategy<Value = Vec<Stmt>> {
    let leaf = prop_oneof![
        5 => (0i64..10).prop_map(Stmt::Add),
        3 => Just(Stmt::AddItem),
        1 => Just(Stmt::Throw),
        1 => Just(Stmt::Terminate),
    ];
    let stmt = leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            (2i64..5, 0i64..5, vec(inner.clone(), 0..3), vec(inner.clone(), 0..3))
                .prop_map(|(m, t, then, other)| Stmt::If { m, t, then, other }),
            (vec(0i64..10, 0..4), vec(inner.clone(), 1..4)).prop_map(|(items, body)| Stmt::ForEach { items, body }),
            (vec(inner.clone(), 1..4), vec(inner, 0..3)).prop_map(|(body, handler)| Stmt::Try { body, handler }),
        ]
    });
    vec(stmt, 1..5)
}

/// A program statement with the step ids it compiles to.
#[derive(Debug, Clone)]
enum Node {
    Add { id: String, k: i64 },
    AddItem { id: String, var: Option<String> },
    If { id: String, m: i64, t: i64, then: Vec<Node>, other: Vec<Node> },
    ForEach { id: String, list: String, var: String, items: Vec<i64>, body: Vec<Node> },
    Try { id: String, catch_id: String, body: Vec<Node>, handler: Vec<Node> },
    Throw { id: String, message: String },
    Terminate { id: String },
}

struct Namer {
    steps: usize,
    loops: usize,
}

impl Namer {
    fn step(&mut self) -> String {
        self.steps += 1;
        format!("step-{}", self.steps)
    }

    /// Annotates a block; statements after a Throw or Terminate are dropped
    /// since nothing could reach them.
    fn block(&mut self, stmts: &[Stmt], item: Option<&str>) -> Vec<Node> {
        let mut out = Vec::new();
        for s in stmts {
            let node = match s {
                Stmt::Add(k) => Node::Add { id: self.step(), k: *k },
                Stmt::AddItem => Node::AddItem { id: self.step(), var: item.map(str::to_string) },
                Stmt::If { m, t, then, other } => {
                    let id = self.step();
                    Node::If { id, m: *m, t: *t, then: self.block(then, item), other: self.block(other, item) }
                }
                Stmt::ForEach { items, body } => {
                    let id = self.step();
                    self.loops += 1;
                    let (list, var) = (format!("items_{}", self.loops), format!("item_{}", self.loops));
                    let body = self.block(body, Some(&var));
                    Node::ForEach { id, list, var, items: items.clone(), body }
                }
                Stmt::Try { body, handler } => {
                    let (id, catch_id) = (self.step(), self.step());
                    Node::Try { id, catch_id, body: self.block(body, item), handler: self.block(handler, item) }
                }
                Stmt::Throw => {
                    let id = self.step();
                    Node::Throw { message: format!("boom at {id}"), id }
                }
                Stmt::Terminate => Node::Terminate { id: self.step() },
            };
            let terminal = matches!(node, Node::Throw { .. } | Node::Terminate { .. });
            out.push(node);
            if terminal {
                break;
            }
        }
        out
    }
}

fn step(id: &str, kind: StepKind, next: Option<String>) -> Step {
    Step { id: id.to_string(), name: id.to_string(), description: String::new(), kind, next_step_id: next, extra: BTreeMap::new() }
}

fn calc(expr: String) -> StepKind {
    StepKind::Calculation(Calculation { expression: Some(Expression::new(expr)), output_variable: Some("acc".into()) })
}

fn exception(function: ExceptionFunction, message: Option<String>, error_variable: Option<String>) -> StepKind {
    StepKind::Exception(ExceptionStep { function: Some(function), message, error_variable, ..ExceptionStep::default() })
}

/// Emits the steps of `nodes`; control leaves the block through `cont`
/// (`None` means the enclosing construct's continuation). Returns the first
/// step of the block, or `cont` when it is empty.
fn emit(nodes: &[Node], cont: Option<String>, out: &mut Vec<Step>, context: &mut BTreeMap<String, ContextEntry>) -> Option<String> {
    let mut next = cont;
    for node in nodes.iter().rev() {
        let (id, s) = match node {
            Node::Add { id, k } => (id, step(id, calc(format!("(${{acc}} * 7 + {k}) % {MODULUS}")), next.clone())),
            Node::AddItem { id, var } => {
                let expr = match var {
                    Some(v) => format!("(${{acc}} * 7 + ${{{v}}}) % {MODULUS}"),
                    None => format!("(${{acc}} * 7) % {MODULUS}"),
                };
                (id, step(id, calc(expr), next.clone()))
            }
            Node::If { id, m, t, then, other } => {
                let true_step_id = emit(then, next.clone(), out, context);
                let false_step_id = emit(other, next.clone(), out, context);
                let condition = Some(Expression::new(format!("(${{acc}} % {m}) < {t}")));
                (id, step(id, StepKind::Decision(Decision { condition, true_step_id, false_step_id }), None))
            }
            Node::ForEach { id, list, var, items, body } => {
                context.insert(list.clone(), ContextEntry::new(ContextType::List, "items").with_value(json!(items)));
                context.insert(var.clone(), ContextEntry::new(ContextType::Number, "current item"));
                let body_start_step_id = emit(body, None, out, context);
                let kind = StepKind::Loop(LoopStep {
                    mode: Some(LoopMode::ForEach),
                    collection_variable: Some(list.clone()),
                    item_variable: Some(var.clone()),
                    condition: None,
                    body_start_step_id,
                });
                (id, step(id, kind, next.clone()))
            }
            Node::Try { id, catch_id, body, handler } => {
                let try_start = emit(body, None, out, context);
                let handler_start = emit(handler, None, out, context);
                out.push(step(
                    catch_id,
                    exception(ExceptionFunction::CatchException, None, Some("err".into())),
                    handler_start,
                ));
                let kind = StepKind::Exception(ExceptionStep {
                    function: Some(ExceptionFunction::TryBlock),
                    try_start_step_id: try_start,
                    catch_step_id: Some(catch_id.clone()),
                    ..ExceptionStep::default()
                });
                (id, step(id, kind, next.clone()))
            }
            Node::Throw { id, message } => {
                (id, step(id, exception(ExceptionFunction::ThrowException, Some(message.clone()), None), None))
            }
            Node::Terminate { id } => {
                (id, step(id, exception(ExceptionFunction::TerminateProcess, Some("done".into()), None), None))
            }
        };
        out.push(s);
        next = Some(id.clone());
    }
    next
}

pub struct Compiled {
    pub workflow: Workflow,
    nodes: Vec<Node>,
}

pub fn compile(program: &[Stmt]) -> Compiled {
    let nodes = Namer { steps: 0, loops: 0 }.block(program, None);
    let mut steps = Vec::new();
    let mut context = BTreeMap::from([
        ("acc".to_string(), ContextEntry::new(ContextType::Number, "accumulator").with_value(json!(0))),
        ("err".to_string(), ContextEntry::new(ContextType::String, "last caught error")),
    ]);
    let start = emit(&nodes, None, &mut steps, &mut context).expect("programs are non-empty");
    steps.sort_by_key(|s| s.id.trim_start_matches("step-").parse::<usize>().unwrap_or(0));
    let workflow = Workflow {
        id: "00000000-0000-4000-8000-000000000001".into(),
        name: "random program".into(),
        description: String::new(),
        parameters: BTreeMap::new(),
        steps,
        default_start_step_id: start,
        context,
    };
    Compiled { workflow, nodes }
}

enum Signal {
    Throw(String),
    Terminate,
}

/// What the simulator predicts for a run.
#[derive(Debug, PartialEq)]
pub struct Expected {
    pub status: ExecStatus,
    pub trace: Vec<String>,
    pub bindings: BTreeMap<String, Value>,
}

struct Sim {
    acc: i64,
    bindings: BTreeMap<String, Value>,
    trace: Vec<String>,
}

impl Sim {
    fn fold(&mut self, x: i64) {
        self.acc = (self.acc * 7 + x) % MODULUS;
    }

    fn block(&mut self, nodes: &[Node]) -> Result<(), Signal> {
        for node in nodes {
            self.node(node)?;
        }
        Ok(())
    }

    fn node(&mut self, node: &Node) -> Result<(), Signal> {
        match node {
            Node::Add { id, k } => {
                self.trace.push(id.clone());
                self.fold(*k);
            }
            Node::AddItem { id, var } => {
                self.trace.push(id.clone());
                let item = var.as_ref().map_or(0, |v| self.bindings[v].as_i64().expect("items are integers"));
                self.fold(item);
            }
            Node::If { id, m, t, then, other } => {
                self.trace.push(id.clone());
                self.block(if self.acc % m < *t { then } else { other })?;
            }
            Node::ForEach { id, var, items, body, .. } => {
                for item in items {
                    self.trace.push(id.clone());
                    self.bindings.insert(var.clone(), json!(item));
                    match self.block(body) {
                        Ok(()) => {}
                        Err(Signal::Throw(m)) => {
                            self.bindings.remove(var);
                            return Err(Signal::Throw(m));
                        }
                        Err(Signal::Terminate) => return Err(Signal::Terminate),
                    }
                }
                self.trace.push(id.clone());
                self.bindings.remove(var);
            }
            Node::Try { id, catch_id, body, handler } => {
                self.trace.push(id.clone());
                match self.block(body) {
                    Err(Signal::Throw(message)) => {
                        self.trace.push(catch_id.clone());
                        self.bindings.insert("err".into(), Value::String(message));
                        self.block(handler)?;
                    }
                    other => other?,
                }
            }
            Node::Throw { id, message } => {
                self.trace.push(id.clone());
                return Err(Signal::Throw(message.clone()));
            }
            Node::Terminate { id } => {
                self.trace.push(id.clone());
                return Err(Signal::Terminate);
            }
        }
        Ok(())
    }
}

impl Compiled {
    pub fn simulate(&self) -> Expected {
        let mut sim = Sim { acc: 0, bindings: BTreeMap::new(), trace: Vec::new() };
        for (name, entry) in &self.workflow.context {
            if !entry.value.is_null() {
                sim.bindings.insert(name.clone(), entry.value.clone());
            }
        }
        let status = match sim.block(&self.nodes) {
            Ok(()) => ExecStatus::Completed,
            Err(Signal::Terminate) => ExecStatus::Terminated,
            Err(Signal::Throw(_)) => ExecStatus::Faulted,
        };
        sim.bindings.insert("acc".into(), json!(sim.acc));
        Expected { status, trace: sim.trace, bindings: normalize_map(&sim.bindings) }
    }
}

/// Numbers compared by value, so `3` and `3.0` agree.
fn normalize(v: &Value) -> Value {
    match v {
        Value::Number(n) => json!(n.as_f64().expect("finite")),
        Value::Array(xs) => Value::Array(xs.iter().map(normalize).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), normalize(v))).collect()),
        other => other.clone(),
    }
}

fn normalize_map(m: &BTreeMap<String, Value>) -> BTreeMap<String, Value> {
    m.iter().map(|(k, v)| (k.clone(), normalize(v))).collect()
}

/// The observable parts of an interpreter run, in the simulator's terms.
pub fn observed(report: &ExecutionReport) -> Expected {
    Expected {
        status: report.status,
        // A faulting step adds a second entry; the simulator records each step once.
        trace: report
            .trace
            .iter()
            .enumerate()
            .filter(|(i, t)| *i == 0 || t.step_id != report.trace[i - 1].step_id || !is_fault(t))
            .map(|(_, t)| t.step_id.clone())
            .collect(),
        bindings: normalize_map(&report.final_context),
    }
}

fn is_fault(t: &flowsmith_core::interp::TraceEntry) -> bool {
    matches!(t.outcome, flowsmith_core::interp::Outcome::Faulted { .. })
}
