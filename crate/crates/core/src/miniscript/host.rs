// SPDX-License-Identifier: Apache-2.0
//! The flow-API boundary between scripts and the flow simulator, and the
//! ordered record of every call a run made.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::flowsim::{Catalog, FlowError, FlowSession, MetricSet, ParamMap, ParamValue, StageId};

/// Script-side state behind `eda = chateda()`.
#[derive(Debug)]
pub struct FlowHandle {
    pub id: u32,
    pub session: Option<FlowSession>,
}

/// A normalized flow-API argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceArg {
    Number(f64),
    Text(String),
    List(Vec<String>),
}

/// What a flow-API call produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallSummary {
    Setup { design: String, platform: String },
    Stage { stage: StageId, metrics: MetricSet },
    Metrics { stage: String, values: Vec<f64> },
    Failed { error: FlowError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Which `chateda()` instance made the call, numbered from 0.
    pub handle: u32,
    pub api: String,
    pub args: BTreeMap<String, TraceArg>,
    pub result: CallSummary,
}

/// One entry per flow-API call, in execution order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApiTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ReplayMismatch {
    #[error("entry {index}: api `{api}` is not a flow call")]
    UnknownApi { index: usize, api: String },
    #[error("entry {index}: malformed arguments for `{api}`")]
    BadArguments { index: usize, api: String },
    #[error("entry {index}: recorded {recorded:?}, replay produced {replayed:?}")]
    Diverged { index: usize, recorded: Box<CallSummary>, replayed: Box<CallSummary> },
}

impl ApiTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Call names in order, arguments dropped.
    pub fn api_sequence(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.api.clone()).collect()
    }

    /// Metrics of the last successful run of `stage`.
    pub fn last_stage_metrics(&self, stage: StageId) -> Option<MetricSet> {
        self.entries.iter().rev().find_map(|e| match &e.result {
            CallSummary::Stage { stage: s, metrics } if *s == stage => Some(*metrics),
            _ => None,
        })
    }

    /// Metrics of the last successful stage call of any kind.
    pub fn last_metrics(&self) -> Option<MetricSet> {
        self.entries.iter().rev().find_map(|e| match &e.result {
            CallSummary::Stage { metrics, .. } => Some(*metrics),
            _ => None,
        })
    }

    /// Re-issues every recorded call against fresh sessions and checks that
    /// each produces the recorded result.
    pub fn replay(&self, catalog: &Catalog) -> Result<(), ReplayMismatch> {
        let mut sessions: HashMap<u32, FlowSession> = HashMap::new();
        for (index, entry) in self.entries.iter().enumerate() {
            let bad = || ReplayMismatch::BadArguments { index, api: entry.api.clone() };
            let replayed = match entry.api.as_str() {
                "setup" => {
                    let design = text_arg(&entry.args, "design_name").ok_or_else(bad)?;
                    let platform = text_arg(&entry.args, "platform").ok_or_else(bad)?;
                    let extra: ParamMap = entry
                        .args
                        .iter()
                        .filter(|(k, _)| *k != "design_name" && *k != "platform")
                        .map(|(k, v)| to_param(v).map(|p| (k.clone(), p)).ok_or_else(bad))
                        .collect::<Result<_, _>>()?;
                    match FlowSession::setup(catalog, design, platform, extra) {
                        Ok(s) => {
                            sessions.insert(entry.handle, s);
                            CallSummary::Setup { design: design.to_string(), platform: platform.to_string() }
                        }
                        Err(error) => CallSummary::Failed { error },
                    }
                }
                "get_metric" => {
                    let stage = text_arg(&entry.args, "stage").ok_or_else(bad)?;
                    let Some(TraceArg::List(metrics)) = entry.args.get("metrics") else {
                        return Err(bad());
                    };
                    match sessions.get(&entry.handle) {
                        None => CallSummary::Failed { error: FlowError::StageNotRun(stage.to_string()) },
                        Some(s) => match s.get_metric(stage, metrics) {
                            Ok(values) => CallSummary::Metrics { stage: stage.to_string(), values },
                            Err(error) => CallSummary::Failed { error },
                        },
                    }
                }
                api => {
                    let stage = StageId::from_api_name(api)
                        .filter(|s| *s != StageId::Setup)
                        .ok_or_else(|| ReplayMismatch::UnknownApi { index, api: api.to_string() })?;
                    let params: ParamMap = entry
                        .args
                        .iter()
                        .map(|(k, v)| to_param(v).map(|p| (k.clone(), p)).ok_or_else(bad))
                        .collect::<Result<_, _>>()?;
                    match sessions.get_mut(&entry.handle) {
                        None => CallSummary::Failed {
                            error: FlowError::StageOrderViolation { expected: StageId::Setup, got: stage },
                        },
                        Some(s) => match s.run_stage(stage, &params) {
                            Ok(metrics) => CallSummary::Stage { stage, metrics },
                            Err(error) => CallSummary::Failed { error },
                        },
                    }
                }
            };
            if replayed != entry.result {
                return Err(ReplayMismatch::Diverged {
                    index,
                    recorded: Box::new(entry.result.clone()),
                    replayed: Box::new(replayed),
                });
            }
        }
        Ok(())
    }
}

fn text_arg<'a>(args: &'a BTreeMap<String, TraceArg>, name: &str) -> Option<&'a str> {
    match args.get(name) {
        Some(TraceArg::Text(s)) => Some(s),
        _ => None,
    }
}

fn to_param(arg: &TraceArg) -> Option<ParamValue> {
    match arg {
        TraceArg::Number(v) => Some(ParamValue::Number(*v)),
        TraceArg::Text(s) => Some(ParamValue::Text(s.clone())),
        TraceArg::List(_) => None,
    }
}
