use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use crate::ir::{BinaryOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("type fault: {0}")]
    TypeFault(String),
    #[error("division by zero")]
    DivisionByZero,
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "record",
    }
}

fn fault<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError::TypeFault(msg.into()))
}

/// Numbers are doubles; integral results are stored as JSON integers so
/// they render without a fractional part.
pub fn number(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 {
        Value::from(x as i64)
    } else {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn as_number(v: &Value, op: &str) -> Result<f64, EvalError> {
    match v {
        Value::Number(n) => Ok(n.as_f64().expect("JSON numbers are finite")),
        other => fault(format!("`{op}` needs numbers, got {}", kind(other))),
    }
}

fn as_bool(v: &Value, op: &str) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => fault(format!("`{op}` needs booleans, got {}", kind(other))),
    }
}

fn date_like() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d{1,4}[-/.]\d{1,2}[-/.]\d{1,4}").expect("valid regex"))
}

fn iso_date() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:\d{2})?)?$").expect("valid regex")
    })
}

/// Strings order lexicographically. A string that looks like a date must be
/// ISO-8601, since lexicographic order is only chronological for that form.
fn compare_strings(a: &str, b: &str) -> Result<Ordering, EvalError> {
    for s in [a, b] {
        if date_like().is_match(s) && !iso_date().is_match(s) {
            return fault(format!("`{s}` is not an ISO-8601 date"));
        }
    }
    Ok(a.cmp(b))
}

fn order(op: BinaryOp, l: &Value, r: &Value) -> Result<Ordering, EvalError> {
    match (l, r) {
        (Value::Number(_), Value::Number(_)) => {
            let (a, b) = (as_number(l, op.symbol())?, as_number(r, op.symbol())?);
            Ok(a.partial_cmp(&b).expect("finite numbers are ordered"))
        }
        (Value::String(a), Value::String(b)) => compare_strings(a, b),
        _ => fault(format!("cannot compare {} with {} using `{}`", kind(l), kind(r), op.symbol())),
    }
}

fn equal(op: BinaryOp, l: &Value, r: &Value) -> Result<bool, EvalError> {
    match (l, r) {
        (Value::Null, _) | (_, Value::Null) => Ok(l == r),
        (Value::Number(_), Value::Number(_)) => Ok(as_number(l, "==")? == as_number(r, "==")?),
        _ if kind(l) == kind(r) => Ok(l == r),
        _ => fault(format!("cannot compare {} with {} using `{}`", kind(l), kind(r), op.symbol())),
    }
}

fn index(base: &Value, key: &Value) -> Result<Value, EvalError> {
    match (base, key) {
        (Value::Object(map), Value::String(k)) => match map.get(k) {
            Some(v) => Ok(v.clone()),
            None => fault(format!("record has no field `{k}`")),
        },
        (Value::Array(items), Value::Number(n)) => {
            let i = n.as_f64().expect("finite");
            if i.fract() != 0.0 || i < 0.0 || i as usize >= items.len() {
                return fault(format!("index {i} out of range for a list of {}", items.len()));
            }
            Ok(items[i as usize].clone())
        }
        _ => fault(format!("cannot index a {} with a {}", kind(base), kind(key))),
    }
}

/// Evaluates an expression against variable bindings.
pub fn eval_expression(e: &Expr, bindings: &BTreeMap<String, Value>) -> Result<Value, EvalError> {
    match e {
        Expr::Number(n) => Ok(number(*n)),
        Expr::Str(s) => Ok(Value::String(s.clone())),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Null => Ok(Value::Null),
        Expr::Var(name) => bindings.get(name).cloned().ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Index(base, key) => index(&eval_expression(base, bindings)?, &eval_expression(key, bindings)?),
        Expr::Unary(UnaryOp::Not, inner) => Ok(Value::Bool(!as_bool(&eval_expression(inner, bindings)?, "!")?)),
        Expr::Unary(UnaryOp::Neg, inner) => Ok(number(-as_number(&eval_expression(inner, bindings)?, "-")?)),
        Expr::Binary(op @ (BinaryOp::And | BinaryOp::Or), l, r) => {
            let left = as_bool(&eval_expression(l, bindings)?, op.symbol())?;
            if (*op == BinaryOp::And && !left) || (*op == BinaryOp::Or && left) {
                return Ok(Value::Bool(left));
            }
            Ok(Value::Bool(as_bool(&eval_expression(r, bindings)?, op.symbol())?))
        }
        Expr::Binary(op, l, r) => {
            let (l, r) = (eval_expression(l, bindings)?, eval_expression(r, bindings)?);
            let sym = op.symbol();
            match op {
                BinaryOp::Eq => Ok(Value::Bool(equal(*op, &l, &r)?)),
                BinaryOp::Ne => Ok(Value::Bool(!equal(*op, &l, &r)?)),
                BinaryOp::Lt => Ok(Value::Bool(order(*op, &l, &r)? == Ordering::Less)),
                BinaryOp::Le => Ok(Value::Bool(order(*op, &l, &r)? != Ordering::Greater)),
                BinaryOp::Gt => Ok(Value::Bool(order(*op, &l, &r)? == Ordering::Greater)),
                BinaryOp::Ge => Ok(Value::Bool(order(*op, &l, &r)? != Ordering::Less)),
                BinaryOp::Add => match (&l, &r) {
                    (Value::String(a), Value::String(b)) => Ok(Value::String(format!("{a}{b}"))),
                    _ => Ok(number(as_number(&l, sym)? + as_number(&r, sym)?)),
                },
                BinaryOp::Sub => Ok(number(as_number(&l, sym)? - as_number(&r, sym)?)),
                BinaryOp::Mul => Ok(number(as_number(&l, sym)? * as_number(&r, sym)?)),
                BinaryOp::Div | BinaryOp::Rem => {
                    let (a, b) = (as_number(&l, sym)?, as_number(&r, sym)?);
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Ok(number(if *op == BinaryOp::Div { a / b } else { a % b }))
                }
                BinaryOp::And | BinaryOp::Or => unreachable!("handled above"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::ir::parse_expression;

    fn run(src: &str, vars: &[(&str, Value)]) -> Result<Value, EvalError> {
        let b = vars.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        eval_expression(&parse_expression(src).unwrap(), &b)
    }

    #[test]
    fn bonus_arithmetic() {
        let v = run("${salary} * ${bonus_pct} / 100", &[("salary", json!(50000)), ("bonus_pct", json!(10))]).unwrap();
        assert_eq!(v, json!(5000));
        assert_eq!(run("7 % 4 - -1", &[]).unwrap(), json!(4));
        assert_eq!(run("1 / 4", &[]).unwrap(), json!(0.25));
    }

    #[test]
    fn iso_dates_compare_lexicographically() {
        let d = [("d", json!("2020-03-01"))];
        assert_eq!(run("${d} < '2020-04-14'", &d).unwrap(), json!(true));
        assert_eq!(run("${d} >= '2020-03-01'", &d).unwrap(), json!(true));
        assert!(matches!(run("${d} < '14/04/2020'", &d), Err(EvalError::TypeFault(_))));
        assert_eq!(run("'apple' < 'banana'", &[]).unwrap(), json!(true));
    }

    #[test]
    fn faults() {
        assert_eq!(run("1/0", &[]), Err(EvalError::DivisionByZero));
        assert_eq!(run("${x} + 1", &[]), Err(EvalError::UnboundVariable("x".into())));
        assert!(matches!(run("1 < 'a'", &[]), Err(EvalError::TypeFault(_))));
        assert!(matches!(run("1 == 'a'", &[]), Err(EvalError::TypeFault(_))));
        assert!(matches!(run("!1", &[]), Err(EvalError::TypeFault(_))));
        assert_eq!(run("${x} == null", &[("x", Value::Null)]).unwrap(), json!(true));
    }

    #[test]
    fn short_circuit_and_indexing() {
        assert_eq!(run("false && ${missing}", &[]).unwrap(), json!(false));
        assert_eq!(run("true || ${missing}", &[]).unwrap(), json!(true));
        let row = [("row", json!({"Salary": 100, "Name": "Ann"}))];
        assert_eq!(run("${row}['Salary'] * 2", &row).unwrap(), json!(200));
        assert_eq!(run("${row}['Name'] == 'Ann'", &row).unwrap(), json!(true));
        assert!(matches!(run("${row}['Nope']", &row), Err(EvalError::TypeFault(_))));
        assert_eq!(run("${xs}[1]", &[("xs", json!([1, 2]))]).unwrap(), json!(2));
    }
}
