// SPDX-License-Identifier: Apache-2.0
//! The controller: prompts a completion backend for a plan and a script,
//! validates both, and runs the script.

mod backend;
mod pipeline;
pub mod plan;
mod prompt;
mod rules;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{Backend, BackendConfig, BackendKind, RemoteBackend};
pub use pipeline::{
    execute, generate_script, plan, prepare, prepare_with, run_requirement, Exchange, PlanFailure, PreparedRun,
    ScriptFailure, SessionReport,
};
pub use plan::{fenced_block, Plan, PlanSyntaxError, PlanViolation, TaskStep, Tool};
pub use prompt::{api_doc_hash, build_prompt, Message, PromptBundle, Role, API_DOC};
pub use rules::{RuleBackend, RuleVariant};

use crate::miniscript::SyntaxError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    /// `req-` and the first 12 hex digits of the text's SHA-256.
    pub id: String,
    pub text: String,
}

impl Requirement {
    pub fn new(text: impl Into<String>) -> Result<Requirement, AgentError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(AgentError::EmptyRequirement);
        }
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Requirement { id: format!("req-{}", &digest[..12]), text })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("requirement text is empty")]
    EmptyRequirement,
    #[error("invalid prompt bundle: {0}")]
    InvalidBundle(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("environment variable {0} holding the backend secret is not set")]
    MissingSecret(String),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend reply malformed: {0}")]
    BackendProtocol(String),
    #[error("could not parse a plan from the reply ({error})")]
    PlanParse { error: PlanSyntaxError, raw: String },
    #[error("plan rejected: {0}")]
    PlanInvalid(PlanViolation),
    #[error("script rejected: {message}")]
    ScriptRejected { syntax: Option<SyntaxError>, message: String, raw: String },
}

impl AgentError {
    /// Errors that mean the pipeline could not run, as opposed to the model
    /// producing a bad answer.
    pub fn is_infrastructure(&self) -> bool {
        matches!(
            self,
            AgentError::Config(_)
                | AgentError::MissingSecret(_)
                | AgentError::BackendUnreachable(_)
                | AgentError::BackendProtocol(_)
        )
    }
}
