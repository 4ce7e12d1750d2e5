// SPDX-License-Identifier: Apache-2.0
//! Evaluation harness and instruction-dataset pipeline.

pub mod dataset;
pub mod grade;
pub mod suite;

use thiserror::Error;

use crate::agent::AgentError;

pub use dataset::{
    export_jsonl, generate_instructions, import_jsonl, parse_response, read_jsonl, render_response,
    render_training_sample, validate_record, write_jsonl, InstructionRecord, Origin, TrainingSample, DEFAULT_COUNT,
    DEFAULT_SEPARATOR,
};
pub use grade::{grade_case, Category, CheckSet, Comparator, EvalCase, Grade, Graded, MetricPredicate};
pub use suite::{
    builtin_suite, load_suite, run_suite, run_suite_with, save_suite, suite_from_toml, suite_to_toml, validate_suite,
    CaseResult, DistributionReport, TASK_REQUIREMENTS,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("suite is empty")]
    EmptySuite,
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("case `{id}`: {reason}")]
    InvalidCase { id: String, reason: String },
    #[error("malformed suite file: {0}")]
    SuiteFormat(String),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("malformed record on line {0}")]
    MalformedLine(usize),
    #[error("separator must not be empty")]
    EmptySeparator,
    #[error("record is not validated")]
    Unvalidated,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Backend and filesystem failures, as opposed to bad input.
    pub fn is_infrastructure(&self) -> bool {
        match self {
            BenchError::Agent(e) => e.is_infrastructure(),
            BenchError::Io(_) => true,
            _ => false,
        }
    }
}
