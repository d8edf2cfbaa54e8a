//! Workflow document model.
//!
//! A workflow is a flat list of steps linked by id (`nextStepId`, branch and
//! loop-body pointers) plus a context table of typed variables. Documents are
//! parsed with JSON-path error reporting and written back in a canonical,
//! byte-stable form.

pub mod expr;
mod model;
pub mod parse;
pub mod serialize;
pub mod vars;

pub use expr::{parse_expression, BinaryOp, Expr, ExprError, UnaryOp};
pub use model::*;
pub use parse::{parse_workflow, ParseError};
pub use serialize::{canonical_json, serialize_canonical};
pub use vars::{collect_variable_refs, interpolate, InterpolationError, TemplateError};
