//! Control-flow graphs built from Calculation, Decision, Loop and
//! TerminateProcess steps, and a breadth-first reachability oracle over their
//! raw references.
//!
//! For these four kinds, every reference is a possible transfer of control
//! and every null continuation lands on a step already visited (a loop header
//! or the exit), so reachability is plain reference closure from the start.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use flowsmith_core::ir::{
    Calculation, Decision, ExceptionFunction, ExceptionStep, Expression, LoopMode, LoopStep, Step, StepKind, Workflow,
};
use proptest::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Calc(Option<usize>),
    Decision(Option<usize>, Option<usize>),
    Loop(Option<usize>, Option<usize>),
    Terminate,
}

fn id(i: usize) -> String {
    format!("step-{}", i + 1)
}

pub fn build(shapes: &[Shape]) -> Workflow {
    let link = |t: &Option<usize>| t.map(id);
    let steps = shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            let (kind, next) = match shape {
                Shape::Calc(n) => (
                    StepKind::Calculation(Calculation {
                        expression: Some(Expression::new("1 + 1")),
                        output_variable: Some("x".into()),
                    }),
                    link(n),
                ),
                Shape::Decision(t, f) => (
                    StepKind::Decision(Decision {
                        condition: Some(Expression::new("1 < 2")),
                        true_step_id: link(t),
                        false_step_id: link(f),
                    }),
                    None,
                ),
                Shape::Loop(body, n) => (
                    StepKind::Loop(LoopStep {
                        mode: Some(LoopMode::While),
                        condition: Some(Expression::new("1 < 2")),
                        body_start_step_id: link(body),
                        ..LoopStep::default()
                    }),
                    link(n),
                ),
                Shape::Terminate => (
                    StepKind::Exception(ExceptionStep {
                        function: Some(ExceptionFunction::TerminateProcess),
                        message: Some("stop".into()),
                        ..ExceptionStep::default()
                    }),
                    None,
                ),
            };
            Step { id: id(i), name: id(i), description: String::new(), kind, next_step_id: next, extra: BTreeMap::new() }
        })
        .collect();
    Workflow {
        id: "00000000-0000-4000-8000-000000000000".into(),
        name: "graph".into(),
        description: String::new(),
        parameters: BTreeMap::new(),
        steps,
        default_start_step_id: id(0),
        context: BTreeMap::new(),
    }
}

/// Indices of steps that no chain of references from step 0 reaches.
pub fn unreachable_oracle(shapes: &[Shape]) -> BTreeSet<usize> {
    let mut seen = vec![false; shapes.len()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        let targets = match shapes[i] {
            Shape::Calc(n) => vec![n],
            Shape::Decision(t, f) => vec![t, f],
            Shape::Loop(b, n) => vec![b, n],
            Shape::Terminate => vec![],
        };
        queue.extend(targets.into_iter().flatten());
    }
    (0..shapes.len()).filter(|&i| !seen[i]).collect()
}

fn targets(n: usize) -> Vec<Option<usize>> {
    std::iter::once(None).chain((0..n).map(Some)).collect()
}

/// Every shape a step can take in an `n`-step graph.
pub fn all_shapes(n: usize, next_only: bool) -> Vec<Shape> {
    let mut out: Vec<Shape> = targets(n).into_iter().map(Shape::Calc).collect();
    out.push(Shape::Terminate);
    if !next_only {
        for a in targets(n) {
            for b in targets(n) {
                out.push(Shape::Decision(a, b));
                out.push(Shape::Loop(a, b));
            }
        }
    }
    out
}

/// Calls `f` on every graph of `n` steps drawn from `all_shapes`.
pub fn for_each_graph(n: usize, next_only: bool, mut f: impl FnMut(&[Shape])) {
    let choices = all_shapes(n, next_only);
    let mut digits = vec![0usize; n];
    loop {
        let shapes: Vec<Shape> = digits.iter().map(|&d| choices[d]).collect();
        f(&shapes);
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            digits[k] += 1;
            if digits[k] < choices.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

fn shape(n: usize) -> impl Strategy<Value = Shape> {
    let target = || prop_oneof![1 => Just(None), 6 => (0..n).prop_map(Some)];
    prop_oneof![
        4 => target().prop_map(Shape::Calc),
        3 => (target(), target()).prop_map(|(t, f)| Shape::Decision(t, f)),
        2 => (target(), target()).prop_map(|(b, x)| Shape::Loop(b, x)),
        1 => Just(Shape::Terminate),
    ]
}

/// Graphs of `sizes` steps with every kind mixed.
pub fn random_graph(sizes: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Shape>> {
    sizes.prop_flat_map(|n| proptest::collection::vec(shape(n), n))
}
