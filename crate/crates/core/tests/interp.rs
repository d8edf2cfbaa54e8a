use flowsmith_core::interp::mocks::{MailboxSeed, MockMailbox, SandboxFs};
use flowsmith_core::interp::{Adapters, ExecFault, ExecStatus, InterpError, Interpreter, Limits, Outcome};
use flowsmith_core::ir::{parse_workflow, Workflow};
use serde_json::{json, Value};

fn workflow(steps: Value, context: Value) -> Workflow {
    let start = steps[0]["id"].as_str().unwrap().to_string();
    let doc = json!({
        "id": "00000000-0000-4000-8000-000000000000",
        "name": "test",
        "description": "test",
        "steps": steps,
        "defaultStartStepId": start,
        "context": context,
    });
    parse_workflow(&doc.to_string()).unwrap()
}

fn step(id: &str, kind: &str, next: Option<&str>, fields: Value) -> Value {
    let mut v = json!({"id": id, "name": id, "description": id, "type": kind, "nextStepId": next});
    v.as_object_mut().unwrap().extend(fields.as_object().unwrap().clone());
    v
}

fn calc(id: &str, next: Option<&str>, expr: &str, out: &str) -> Value {
    step(id, "Calculation", next, json!({"expression": expr, "outputVariable": out}))
}

#[test]
fn foreach_runs_the_body_once_per_item() {
    for (items, body_len) in [(3usize, 2usize), (0, 2), (4, 1), (1, 3)] {
        let mut steps = vec![step(
            "loop",
            "Loop",
            Some("after"),
            json!({"mode": "ForEach", "collectionVariable": "xs", "itemVariable": "x", "bodyStartStepId": "b0"}),
        )];
        for i in 0..body_len {
            let next = (i + 1 < body_len).then(|| format!("b{}", i + 1));
            steps.push(calc(&format!("b{i}"), next.as_deref(), "${total} + ${x}", "total"));
        }
        steps.push(calc("after", None, "${total}", "result"));
        let xs: Vec<i64> = (1..=items as i64).collect();
        let w = workflow(
            Value::Array(steps),
            json!({
                "xs": {"type": "list", "value": xs},
                "total": {"type": "number", "value": 0},
                "result": {"type": "number"},
                "x": {"type": "number"},
            }),
        );
        let mut adapters = Adapters::new();
        let report = Interpreter::new(&mut adapters).run(&w).unwrap();
        assert_eq!(report.status, ExecStatus::Completed);
        let body_runs = report.trace.iter().filter(|t| t.step_id.starts_with('b')).count();
        assert_eq!(body_runs, items * body_len, "{items} items x {body_len} body steps");
        // header passes: one per item plus the exit pass, then the step after the loop
        assert_eq!(report.steps_executed as usize, items * body_len + items + 1 + 1);
        let sum: i64 = xs.iter().sum::<i64>() * body_len as i64;
        assert_eq!(report.final_context["result"], json!(sum));
        assert!(!report.final_context.contains_key("x"), "item variable is unbound after the loop");
    }
}

fn try_catch_workflow(path: &str) -> Workflow {
    workflow(
        json!([
            step("try", "Exception", Some("done"), json!({"function": "TryBlock", "tryStartStepId": "read", "catchStepId": "catch"})),
            step("read", "File", None, json!({"function": "ReadFile", "parameters": {"path": path}, "outputVariable": "text"})),
            step("catch", "Exception", Some("fallback"), json!({"function": "CatchException", "errorVariable": "err"})),
            calc("fallback", None, "'fallback'", "text"),
            calc("done", None, "${text}", "out"),
        ]),
        json!({
            "text": {"type": "string"},
            "out": {"type": "string"},
        }),
    )
}

#[test]
fn adapter_errors_are_caught_and_execution_resumes_after_the_try() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("present.txt"), "hello").unwrap();

    let mut adapters = Adapters::new().with(SandboxFs::new(dir.path()));
    let ok = Interpreter::new(&mut adapters).run(&try_catch_workflow("present.txt")).unwrap();
    assert_eq!(ok.status, ExecStatus::Completed);
    assert_eq!(ok.final_context["out"], "hello");
    assert!(ok.entries_for("catch").next().is_none());

    let caught = Interpreter::new(&mut adapters).run(&try_catch_workflow("missing.txt")).unwrap();
    assert_eq!(caught.status, ExecStatus::Completed);
    assert_eq!(caught.final_context["out"], "fallback");
    let err = caught.final_context["err"].as_str().unwrap();
    assert!(err.contains("missing.txt"), "{err}");
    let order: Vec<&str> = caught.trace.iter().map(|t| t.step_id.as_str()).collect();
    assert_eq!(order, ["try", "read", "catch", "fallback", "done"]);
}

#[test]
fn throw_without_try_is_uncaught() {
    let w = workflow(
        json!([step("boom", "Exception", None, json!({"function": "ThrowException", "message": "bad ${what}"}))]),
        json!({"what": {"type": "string", "value": "input"}}),
    );
    let mut adapters = Adapters::new();
    let r = Interpreter::new(&mut adapters).run(&w).unwrap();
    assert_eq!(r.status, ExecStatus::Faulted);
    assert_eq!(r.error, Some(ExecFault::UncaughtException { message: "bad input".into() }));
}

#[test]
fn terminate_stops_the_run() {
    let w = workflow(
        json!([
            step("stop", "Exception", Some("never"), json!({"function": "TerminateProcess", "message": "done early"})),
            calc("never", None, "1", "n"),
        ]),
        json!({"n": {"type": "number"}}),
    );
    let mut adapters = Adapters::new();
    let r = Interpreter::new(&mut adapters).run_unchecked(&w);
    assert_eq!(r.status, ExecStatus::Terminated);
    assert_eq!(r.steps_executed, 1);
    assert!(matches!(&r.trace[0].outcome, Outcome::Terminated { message } if message == "done early"));
}

#[test]
fn endless_while_hits_the_step_limit() {
    let w = workflow(
        json!([
            step("spin", "Loop", None, json!({"mode": "While", "condition": "true", "bodyStartStepId": "tick"})),
            calc("tick", None, "${n} + 1", "n"),
        ]),
        json!({"n": {"type": "number", "value": 0}}),
    );
    let mut adapters = Adapters::new();
    let limits = Limits { max_steps: 101, ..Limits::default() };
    let r = Interpreter::new(&mut adapters).with_limits(limits).run(&w).unwrap();
    assert_eq!(r.status, ExecStatus::Faulted);
    assert_eq!(r.error, Some(ExecFault::StepLimitExceeded { limit: 101 }));
    assert_eq!(r.steps_executed, 101);
    assert_eq!(r.final_context["n"], json!(50));
}

#[test]
fn invalid_workflows_are_refused() {
    let w = workflow(json!([calc("a", Some("ghost"), "1", "n")]), json!({"n": {"type": "number"}}));
    let mut adapters = Adapters::new();
    let result = Interpreter::new(&mut adapters).run(&w);
    match result {
        Err(InterpError::Invalid(diags)) => assert!(diags.iter().any(|d| d.rule == "graph/dangling-id")),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn empty_essential_at_call_time_faults() {
    let w = workflow(
        json!([step("send", "Outlook", None, json!({"function": "SendEmail", "parameters": {"to": "${who}", "body": "hi"}}))]),
        json!({"who": {"type": "string", "value": ""}}),
    );
    let mailbox = MockMailbox::new(MailboxSeed::default());
    let mut adapters = Adapters::new().with(mailbox.clone());
    let r = Interpreter::new(&mut adapters).run(&w).unwrap();
    assert_eq!(r.error, Some(ExecFault::MissingParameter { step_id: "send".into(), parameter: "to".into() }));
    assert!(mailbox.sent().is_empty());
}

#[test]
fn unknown_steps_fault_unless_relaxed() {
    let w = workflow(
        json!([step("u", "Unknown", Some("c"), json!({"rawDescription": "do something"})), calc("c", None, "2", "n")]),
        json!({"n": {"type": "number"}}),
    );
    let mut adapters = Adapters::new();
    let strict = Interpreter::new(&mut adapters).run_unchecked(&w);
    assert_eq!(strict.error, Some(ExecFault::UnknownStep { step_id: "u".into() }));
    let relaxed = Interpreter::new(&mut adapters)
        .with_limits(Limits { strict_unknown: false, ..Limits::default() })
        .run_unchecked(&w);
    assert_eq!(relaxed.status, ExecStatus::Completed);
    assert_eq!(relaxed.final_context["n"], json!(2));
}

#[test]
fn missing_adapter_faults() {
    let w = workflow(
        json!([step("r", "Outlook", None, json!({"function": "ReadEmails", "parameters": {"folder": "Inbox"}}))]),
        json!({}),
    );
    let mut adapters = Adapters::new();
    let r = Interpreter::new(&mut adapters).run(&w).unwrap();
    assert_eq!(r.error, Some(ExecFault::AdapterMissing { tool: flowsmith_core::ir::Tool::Outlook }));
}
