//! Control-flow graph over steps.
//!
//! A `null` `nextStepId` does not always end the workflow: inside a loop body
//! it returns to the loop header, and inside a try or catch chain it continues
//! at the TryBlock's own `nextStepId`. The graph is built by exploring
//! `(step, enclosing frames)` states from the start step so that each
//! step-level edge reflects where control actually goes.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::ir::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Frame {
    Loop(usize),
    Try(usize),
}

/// A step-level control edge. `binds` names the loop item variable that is
/// assigned when control enters a ForEach body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub binds: Option<String>,
}

/// An explicit step-id reference that resolves to no step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dangling {
    /// `None` for `defaultStartStepId`.
    pub step: Option<usize>,
    pub field: &'static str,
    pub target: String,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub start: Option<usize>,
    pub edges: BTreeSet<Edge>,
    pub reachable: Vec<bool>,
    /// Steps from which control can leave the workflow normally.
    pub exits: BTreeSet<usize>,
}

impl FlowGraph {
    pub fn successors(&self, from: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == from)
    }

    pub fn predecessors(&self, to: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == to)
    }
}

/// Every explicit step-id field with its key name.
pub fn step_references(step: &Step) -> Vec<(&'static str, &str)> {
    let fields: Vec<(&'static str, &Option<StepId>)> = match &step.kind {
        StepKind::Decision(d) => vec![("trueStepId", &d.true_step_id), ("falseStepId", &d.false_step_id)],
        StepKind::Loop(l) => vec![("bodyStartStepId", &l.body_start_step_id)],
        StepKind::Exception(e) => vec![("tryStartStepId", &e.try_start_step_id), ("catchStepId", &e.catch_step_id)],
        _ => Vec::new(),
    };
    fields
        .into_iter()
        .chain([("nextStepId", &step.next_step_id)])
        .filter_map(|(k, v)| v.as_deref().map(|id| (k, id)))
        .collect()
}

pub fn dangling_references(w: &Workflow) -> Vec<Dangling> {
    let ids: HashSet<&str> = w.steps.iter().map(|s| s.id.as_str()).collect();
    let mut out = Vec::new();
    if !ids.contains(w.default_start_step_id.as_str()) {
        out.push(Dangling { step: None, field: "defaultStartStepId", target: w.default_start_step_id.clone() });
    }
    for (i, step) in w.steps.iter().enumerate() {
        for (field, target) in step_references(step) {
            if !ids.contains(target) {
                out.push(Dangling { step: Some(i), field, target: target.to_string() });
            }
        }
    }
    out
}

struct Builder<'a> {
    w: &'a Workflow,
    index: HashMap<&'a str, usize>,
}

enum Target {
    Step(usize, Vec<Frame>, Option<String>),
    Exit,
}

impl<'a> Builder<'a> {
    fn new(w: &'a Workflow) -> Self {
        let mut index = HashMap::new();
        for (i, s) in w.steps.iter().enumerate() {
            index.entry(s.id.as_str()).or_insert(i);
        }
        Builder { w, index }
    }

    fn resolve(&self, id: &Option<StepId>) -> Option<usize> {
        id.as_deref().and_then(|id| self.index.get(id).copied())
    }

    /// Enters a frame, collapsing re-entry of a frame already on the stack.
    fn enter(stack: &[Frame], frame: Frame) -> Vec<Frame> {
        match stack.iter().position(|f| *f == frame) {
            Some(p) => stack[..=p].to_vec(),
            None => {
                let mut s = stack.to_vec();
                s.push(frame);
                s
            }
        }
    }

    /// Where control goes when a chain ends with a null `nextStepId`.
    fn continuation(&self, stack: &[Frame], out: &mut Vec<Target>) {
        match stack.split_last() {
            None => out.push(Target::Exit),
            Some((Frame::Loop(h), rest)) => out.push(Target::Step(*h, rest.to_vec(), None)),
            Some((Frame::Try(t), rest)) => match &self.w.steps[*t].next_step_id {
                Some(id) => {
                    if let Some(n) = self.index.get(id.as_str()) {
                        out.push(Target::Step(*n, rest.to_vec(), None));
                    }
                }
                None => self.continuation(rest, out),
            },
        }
    }

    fn follow_next(&self, step: &Step, stack: &[Frame], out: &mut Vec<Target>) {
        match &step.next_step_id {
            Some(_) => {
                if let Some(n) = self.resolve(&step.next_step_id) {
                    out.push(Target::Step(n, stack.to_vec(), None));
                }
            }
            None => self.continuation(stack, out),
        }
    }

    fn transitions(&self, at: usize, stack: &[Frame]) -> Vec<Target> {
        let step = &self.w.steps[at];
        let mut out = Vec::new();
        match &step.kind {
            StepKind::Decision(d) => {
                for b in [&d.true_step_id, &d.false_step_id] {
                    if let Some(n) = self.resolve(b) {
                        out.push(Target::Step(n, stack.to_vec(), None));
                    }
                }
            }
            StepKind::Loop(l) => {
                if let Some(b) = self.resolve(&l.body_start_step_id) {
                    let binds = match l.mode {
                        Some(LoopMode::While) => None,
                        _ => l.item_variable.clone().filter(|v| !v.is_empty()),
                    };
                    out.push(Target::Step(b, Self::enter(stack, Frame::Loop(at)), binds));
                }
                self.follow_next(step, stack, &mut out);
            }
            StepKind::Exception(e) => match e.function {
                Some(ExceptionFunction::TryBlock) => {
                    let inner = Self::enter(stack, Frame::Try(at));
                    for b in [&e.try_start_step_id, &e.catch_step_id] {
                        if let Some(n) = self.resolve(b) {
                            out.push(Target::Step(n, inner.clone(), None));
                        }
                    }
                }
                Some(ExceptionFunction::ThrowException | ExceptionFunction::TerminateProcess) => {}
                _ => self.follow_next(step, stack, &mut out),
            },
            _ => self.follow_next(step, stack, &mut out),
        }
        out
    }
}

pub fn build_flow_graph(w: &Workflow) -> FlowGraph {
    let b = Builder::new(w);
    let start = b.index.get(w.default_start_step_id.as_str()).copied();
    let mut reachable = vec![false; w.steps.len()];
    let mut edges = BTreeSet::new();
    let mut exits = BTreeSet::new();
    let mut seen: HashSet<(usize, Vec<Frame>)> = HashSet::new();
    let mut queue = VecDeque::new();
    if let Some(s) = start {
        queue.push_back((s, Vec::new()));
    }
    while let Some((at, stack)) = queue.pop_front() {
        if !seen.insert((at, stack.clone())) {
            continue;
        }
        reachable[at] = true;
        for t in b.transitions(at, &stack) {
            match t {
                Target::Exit => {
                    exits.insert(at);
                }
                Target::Step(to, s, binds) => {
                    edges.insert(Edge { from: at, to, binds });
                    queue.push_back((to, s));
                }
            }
        }
    }
    FlowGraph { start, edges, reachable, exits }
}

/// Whether the body of the loop at `header` can cycle forever without
/// returning to the header, ending the process or leaving the loop.
///
/// Returns `None` when the body references a missing step, since the shape
/// cannot be judged then.
pub fn loop_body_is_open(w: &Workflow, header: usize) -> Option<bool> {
    let b = Builder::new(w);
    let StepKind::Loop(l) = &w.steps[header].kind else { return Some(false) };
    let body = b.resolve(&l.body_start_step_id)?;
    let base = vec![Frame::Loop(header)];
    let mut seen: HashSet<(usize, Vec<Frame>)> = HashSet::new();
    let mut queue = VecDeque::from([(body, base.clone())]);
    let mut closed = false;
    while let Some((at, stack)) = queue.pop_front() {
        if !seen.insert((at, stack.clone())) {
            continue;
        }
        let step = &w.steps[at];
        if step_references(step).iter().any(|(_, id)| !b.index.contains_key(id)) {
            return None;
        }
        if matches!(
            &step.kind,
            StepKind::Exception(ExceptionStep {
                function: Some(ExceptionFunction::ThrowException | ExceptionFunction::TerminateProcess),
                ..
            })
        ) {
            closed = true;
        }
        for t in b.transitions(at, &stack) {
            match t {
                Target::Exit => closed = true,
                Target::Step(to, s, _) => {
                    if to == header || !s.starts_with(&base) {
                        closed = true;
                    } else {
                        queue.push_back((to, s));
                    }
                }
            }
        }
    }
    Some(!closed)
}
