//! Core of the flowsmith workflow synthesis engine.
//!
//! The crate is organised around the workflow document model:
//!
//! - [`ir`]: the workflow intermediate representation, parsing and canonical
//!   serialization, `${var}` handling and the expression grammar.
//! - [`validate`]: semantic validation passes producing [`validate::Diagnostic`]s.
//! - [`prompts`]: the prompt template registry and deterministic rendering.
//! - [`llm`]: backend-agnostic chat completion client with replay support.
//! - [`pipeline`]: the layered synthesis session state machine.
//! - [`interp`]: a workflow interpreter with deterministic mock tool adapters.
//! - [`eval`]: dataset loading, structural scoring and experiment reports.

pub mod eval;
pub mod interp;
pub mod ir;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod validate;

mod unique_map;
