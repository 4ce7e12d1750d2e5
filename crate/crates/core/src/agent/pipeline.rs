// SPDX-License-Identifier: Apache-2.0
//! Requirement → plan → script → execution, with every artifact kept in the
//! report.

use serde::{Deserialize, Serialize};

use super::backend::Backend;
use super::plan::{fenced_block, Plan, PlanViolation};
use super::prompt::{api_doc_hash, build_prompt, Message, PromptBundle, Role, API_DOC};
use super::{AgentError, Requirement};
use crate::dse::TuneResult;
use crate::flowsim::MetricSet;
use crate::miniscript::{
    interpret_observed, parse, ApiTrace, FlowObserver, HostEnv, RuntimeFault, RuntimeLimits, SyntaxError,
};

/// One request/response exchange with the backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub messages: Vec<Message>,
    pub reply: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanFailure {
    Parse { line: usize, message: String },
    Invalid { violation: PlanViolation },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptFailure {
    /// Absent when the reply had no script block at all.
    pub syntax: Option<SyntaxError>,
    pub message: String,
}

/// The audit record of one requirement run. Contains no timestamps, so
/// identical inputs give byte-identical JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub requirement_id: String,
    pub requirement: String,
    pub api_doc_hash: String,
    pub backend: String,
    pub exchanges: Vec<Exchange>,
    pub plan: Option<Plan>,
    pub plan_error: Option<PlanFailure>,
    pub script: Option<String>,
    pub script_error: Option<ScriptFailure>,
    /// Set when an approver replaced the generated script.
    pub script_edited: bool,
    pub executed: bool,
    pub trace: ApiTrace,
    pub output: String,
    pub metrics: Option<MetricSet>,
    pub tunes: Vec<TuneResult>,
    pub faults: Vec<RuntimeFault>,
}

impl SessionReport {
    fn new(requirement: &Requirement, backend: &dyn Backend) -> SessionReport {
        SessionReport {
            requirement_id: requirement.id.clone(),
            requirement: requirement.text.clone(),
            api_doc_hash: api_doc_hash().to_string(),
            backend: backend.name().to_string(),
            exchanges: Vec::new(),
            plan: None,
            plan_error: None,
            script: None,
            script_error: None,
            script_edited: false,
            executed: false,
            trace: ApiTrace::default(),
            output: String::new(),
            metrics: None,
            tunes: Vec::new(),
            faults: Vec::new(),
        }
    }

    /// Re-runs the stored script and checks trace, output and metrics match
    /// bit for bit.
    pub fn reproduces(&self, env: &HostEnv, limits: &RuntimeLimits) -> bool {
        let Some(script) = self.script.as_ref().filter(|_| self.executed) else {
            return !self.executed;
        };
        let Ok(program) = parse(script) else { return false };
        let ex = crate::miniscript::interpret(&program, env, limits);
        ex.trace == self.trace
            && ex.output == self.output
            && ex.trace.last_metrics() == self.metrics
            && ex.fault.into_iter().collect::<Vec<_>>() == self.faults
    }
}

/// Asks for a plan, re-asking on unparseable replies up to `max_retries`
/// times. Every exchange is appended to `log`.
pub fn plan(
    requirement: &Requirement,
    backend: &dyn Backend,
    max_retries: u32,
    log: &mut Vec<Exchange>,
) -> Result<Plan, AgentError> {
    let messages = build_prompt(&PromptBundle {
        api_doc: API_DOC,
        requirement: &requirement.text,
        plan: None,
        role: Role::Planning,
    })?;
    let mut last_error = None;
    for _ in 0..=max_retries {
        let reply = backend.complete(&messages)?;
        let parsed = Plan::from_reply(&reply);
        log.push(Exchange { role: Role::Planning, messages: messages.clone(), reply: reply.clone() });
        match parsed {
            Ok(plan) => {
                plan.validate().map_err(AgentError::PlanInvalid)?;
                return Ok(plan);
            }
            Err(e) => last_error = Some((e, reply)),
        }
    }
    let (error, raw) = last_error.expect("at least one attempt");
    Err(AgentError::PlanParse { error, raw })
}

/// Asks for a script; one repair round if it does not parse.
pub fn generate_script(
    requirement: &Requirement,
    plan: &Plan,
    backend: &dyn Backend,
    log: &mut Vec<Exchange>,
) -> Result<String, AgentError> {
    let mut messages = build_prompt(&PromptBundle {
        api_doc: API_DOC,
        requirement: &requirement.text,
        plan: Some(plan),
        role: Role::Codegen,
    })?;
    let mut outcome = None;
    for _round in 0..2 {
        let reply = backend.complete(&messages)?;
        log.push(Exchange { role: Role::Codegen, messages: messages.clone(), reply: reply.clone() });
        let (syntax, message) = match fenced_block(&reply, "script") {
            None => (None, "no ```script block in reply".to_string()),
            Some((_, body)) => match parse(body) {
                Ok(_) => return Ok(body.to_string()),
                Err(e) => (Some(e.clone()), e.to_string()),
            },
        };
        messages.push(Message::assistant(reply.clone()));
        messages.push(Message::user(format!(
            "The script was rejected: {message}. Reply with a corrected ```script block."
        )));
        outcome = Some((syntax, message, reply));
    }
    let (syntax, message, raw) = outcome.expect("two rounds ran");
    Err(AgentError::ScriptRejected { syntax, message, raw })
}

/// Planning and code generation done; execution not yet started. Holds no
/// flow session, so a run can wait here for approval indefinitely.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub report: SessionReport,
}

impl PreparedRun {
    /// Whether there is a script to execute.
    pub fn is_executable(&self) -> bool {
        self.report.script.is_some()
    }
}

/// Plans and generates a script. Plan and script failures are recorded in
/// the report; only infrastructure errors are returned.
pub fn prepare(requirement: &Requirement, backend: &dyn Backend, max_retries: u32) -> Result<PreparedRun, AgentError> {
    prepare_with(requirement, backend, max_retries, &mut |_| {})
}

/// [`prepare`], calling `planned` once the planning outcome is in the report
/// and before any script is requested.
pub fn prepare_with(
    requirement: &Requirement,
    backend: &dyn Backend,
    max_retries: u32,
    planned: &mut dyn FnMut(&SessionReport),
) -> Result<PreparedRun, AgentError> {
    let mut report = SessionReport::new(requirement, backend);
    let outcome = plan(requirement, backend, max_retries, &mut report.exchanges);
    let plan = match outcome {
        Ok(p) => p,
        Err(AgentError::PlanParse { error, .. }) => {
            report.plan_error = Some(PlanFailure::Parse { line: error.line, message: error.message });
            planned(&report);
            return Ok(PreparedRun { report });
        }
        Err(AgentError::PlanInvalid(violation)) => {
            // Keep the rejected plan for audit.
            report.plan = report.exchanges.last().and_then(|x| Plan::from_reply(&x.reply).ok());
            report.plan_error = Some(PlanFailure::Invalid { violation });
            planned(&report);
            return Ok(PreparedRun { report });
        }
        Err(e) => return Err(e),
    };
    report.plan = Some(plan.clone());
    planned(&report);
    match generate_script(requirement, &plan, backend, &mut report.exchanges) {
        Ok(script) => report.script = Some(script),
        Err(AgentError::ScriptRejected { syntax, message, raw }) => {
            report.script = fenced_block(&raw, "script").map(|(_, b)| b.to_string());
            report.script_error = Some(ScriptFailure { syntax, message });
        }
        Err(e) => return Err(e),
    }
    Ok(PreparedRun { report })
}

/// Executes the prepared script, or `replacement` if an approver edited it.
/// The caller must have checked that a replacement parses.
pub fn execute(
    prepared: PreparedRun,
    replacement: Option<String>,
    env: &HostEnv,
    limits: &RuntimeLimits,
    observer: &mut dyn FlowObserver,
) -> SessionReport {
    let mut report = prepared.report;
    if let Some(script) = replacement {
        report.script_edited = report.script.as_deref() != Some(script.as_str());
        report.script = Some(script);
        report.script_error = None;
    }
    if report.script_error.is_some() {
        return report;
    }
    let Some(program) = report.script.as_deref().and_then(|s| parse(s).ok()) else {
        return report;
    };
    let ex = interpret_observed(&program, env, limits, observer);
    report.executed = true;
    report.metrics = ex.trace.last_metrics();
    report.trace = ex.trace;
    report.output = ex.output;
    report.tunes = ex.tunes;
    report.faults = ex.fault.into_iter().collect();
    report
}

/// The whole pipeline with auto-execution.
pub fn run_requirement(
    requirement: &Requirement,
    backend: &dyn Backend,
    max_retries: u32,
    env: &HostEnv,
    limits: &RuntimeLimits,
) -> Result<SessionReport, AgentError> {
    struct Quiet;
    impl FlowObserver for Quiet {}
    let prepared = prepare(requirement, backend, max_retries)?;
    Ok(execute(prepared, None, env, limits, &mut Quiet))
}
