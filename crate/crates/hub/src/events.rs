// SPDX-License-Identifier: Apache-2.0
//! Run lifecycle events as streamed to clients.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use edagent_core::agent::{Plan, PlanFailure, ScriptFailure};
use edagent_core::flowsim::{MetricSet, StageId};
use edagent_core::miniscript::{ApiTrace, RuntimeFault, TraceArg, TraceEntry};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Planning,
    Scripting,
    AwaitingApproval,
    Executing,
    Finished,
    Faulted,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Finished | RunState::Faulted)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FaultInfo {
    Runtime {
        fault: RuntimeFault,
    },
    /// The model backend failed; no report exists.
    Backend {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    PlanReady { plan: Option<Plan>, error: Option<PlanFailure> },
    ScriptReady { script: Option<String>, error: Option<ScriptFailure>, awaiting_approval: bool },
    StageStarted { handle: u32, stage: StageId, args: BTreeMap<String, TraceArg> },
    StageFinished { handle: u32, stage: StageId, metrics: MetricSet },
    ApiCall { entry: TraceEntry },
    Fault(FaultInfo),
    RunFinished { state: RunState, metrics: Option<MetricSet>, output: String },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::PlanReady { .. } => "plan_ready",
            EventBody::ScriptReady { .. } => "script_ready",
            EventBody::StageStarted { .. } => "stage_started",
            EventBody::StageFinished { .. } => "stage_finished",
            EventBody::ApiCall { .. } => "api_call",
            EventBody::Fault(_) => "fault",
            EventBody::RunFinished { .. } => "run_finished",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    /// Starts at 1 and increases by one per event of a run.
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl RunEvent {
    pub fn is_terminal(&self) -> bool {
        matches!(self.body, EventBody::RunFinished { .. })
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// The API trace carried by a run's `api_call` events.
pub fn replay_trace(events: &[RunEvent]) -> ApiTrace {
    ApiTrace {
        entries: events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::ApiCall { entry } => Some(entry.clone()),
                _ => None,
            })
            .collect(),
    }
}

/// Sequence numbers strictly increase and nothing follows `run_finished`.
pub fn is_well_ordered(events: &[RunEvent]) -> bool {
    events.windows(2).all(|w| w[0].seq < w[1].seq && !w[0].is_terminal())
}
