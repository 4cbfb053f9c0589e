//! Environment model generation.
//!
//! Scenario models are transition systems over labels and actions whose order
//! is given by a [`ProcessExpr`]. A pipeline of generators produces an
//! [`IntermediateModel`] for a program fragment and the translator turns it
//! into sequential C control functions plus aspect bindings.

pub mod generators;
pub mod model;
pub mod process;
pub mod translate;

pub use generators::{entry_caller_generate, run_generator_pipeline, GeneratorSpec};
pub use model::{
    enumerate_scenario_traces, enumerate_traces, pair_signals, parse_model, Action, EntryOrder,
    IntermediateModel, Label, ScenarioModel, SignalPair, SignalPairing,
};
pub use process::{parse_process, print_process, ProcessExpr, SyntaxError};
pub use translate::{translate, HarnessBundle, TranslateOptions};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmgError {
    #[error("syntax error in {context}: {error}")]
    Syntax { context: String, error: SyntaxError },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("signal type mismatch between {0} and {1}")]
    Type(String, String),
    #[error("generator {stage} failed: {message}")]
    Generation { stage: String, message: String },
    #[error("translation error: {0}")]
    Translation(String),
}
