// SPDX-License-Identifier: Apache-2.0
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::plan::{Plan, Tool};
use super::AgentError;

pub const API_DOC: &str = include_str!("../../assets/flow_api.md");

/// Hex SHA-256 of [`API_DOC`], recorded in every report.
pub fn api_doc_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| hex::encode(Sha256::digest(API_DOC.as_bytes())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planning,
    Codegen,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Message {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Message {
        Message { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Message {
        Message { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptBundle<'a> {
    pub api_doc: &'a str,
    pub requirement: &'a str,
    pub plan: Option<&'a Plan>,
    pub role: Role,
}

pub(crate) const ROLE_MARKER: &str = "Role: ";
pub(crate) const REQUIREMENT_HEADER: &str = "Requirement:\n";
pub(crate) const PLAN_HEADER: &str = "\n\nPlan:\n";

fn instructions(role: Role) -> String {
    match role {
        Role::Planning => {
            let vocabulary: Vec<&str> = Tool::ALL.iter().map(|t| t.name()).collect();
            format!(
                "{ROLE_MARKER}planning\n\
                 Decompose the requirement into ordered sub-tasks. Reply with one fenced \
                 block tagged `plan` holding lines `N. tool: description`, numbered from 1. \
                 Tools: {}. Flow stages must appear in flow order without gaps. Add the line \
                 `resume: true` before the steps only when the flow is already underway.",
                vocabulary.join(", ")
            )
        }
        Role::Codegen => format!(
            "{ROLE_MARKER}codegen\n\
             Write a script that carries out the plan using only the API above. Reply with \
             one fenced block tagged `script`."
        ),
    }
}

/// System message: API document plus role instructions. User message: the
/// requirement, followed by the plan for code generation.
pub fn build_prompt(bundle: &PromptBundle<'_>) -> Result<Vec<Message>, AgentError> {
    let mut user = format!("{REQUIREMENT_HEADER}{}", bundle.requirement);
    match (bundle.role, bundle.plan) {
        (Role::Codegen, None) => {
            return Err(AgentError::InvalidBundle("a codegen prompt needs a plan".into()));
        }
        (Role::Codegen, Some(plan)) => {
            user.push_str(PLAN_HEADER);
            user.push_str(&plan.to_block());
        }
        (Role::Planning, _) => {}
    }
    Ok(vec![
        Message::system(format!("{}\n\n{}", bundle.api_doc.trim_end(), instructions(bundle.role))),
        Message::user(user),
    ])
}

/// Recovers the role and requirement text from a conversation built by
/// [`build_prompt`].
pub(crate) fn read_prompt(messages: &[Message]) -> Option<(Role, &str)> {
    let system = messages.iter().find(|m| m.role == "system")?;
    let role = system.content.lines().find_map(|l| l.strip_prefix(ROLE_MARKER)).and_then(|r| match r.trim() {
        "planning" => Some(Role::Planning),
        "codegen" => Some(Role::Codegen),
        _ => None,
    })?;
    let user = messages.iter().find(|m| m.role == "user")?;
    let body = user.content.strip_prefix(REQUIREMENT_HEADER)?;
    let requirement = match role {
        Role::Planning => body,
        Role::Codegen => &body[..body.rfind(PLAN_HEADER)?],
    };
    Some((role, requirement))
}
