// SPDX-License-Identifier: Apache-2.0
//! Task plans: the fenced `plan` wire format, validation, and a symbolic
//! replay that shows an accepted plan is a legal flow.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::flowsim::{Catalog, FlowError, FlowSession, ParamMap, StageId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Setup,
    Synthesis,
    Floorplan,
    Placement,
    Cts,
    GlobalRoute,
    DetailRoute,
    FinalReport,
    GetMetric,
    Tune,
}

impl Tool {
    pub const ALL: [Tool; 10] = [
        Tool::Setup,
        Tool::Synthesis,
        Tool::Floorplan,
        Tool::Placement,
        Tool::Cts,
        Tool::GlobalRoute,
        Tool::DetailRoute,
        Tool::FinalReport,
        Tool::GetMetric,
        Tool::Tune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tool::Setup => "setup",
            Tool::Synthesis => "synthesis",
            Tool::Floorplan => "floorplan",
            Tool::Placement => "placement",
            Tool::Cts => "cts",
            Tool::GlobalRoute => "global_route",
            Tool::DetailRoute => "detail_route",
            Tool::FinalReport => "final_report",
            Tool::GetMetric => "get_metric",
            Tool::Tune => "tune",
        }
    }

    pub fn from_name(name: &str) -> Option<Tool> {
        Tool::ALL.into_iter().find(|t| t.name() == name)
    }

    /// The flow stage a stage-typed step runs; `final_report` runs `Final`.
    pub fn stage(self) -> Option<StageId> {
        Some(match self {
            Tool::Setup => StageId::Setup,
            Tool::Synthesis => StageId::Synthesis,
            Tool::Floorplan => StageId::Floorplan,
            Tool::Placement => StageId::Placement,
            Tool::Cts => StageId::Cts,
            Tool::GlobalRoute => StageId::GlobalRoute,
            Tool::DetailRoute => StageId::DetailRoute,
            Tool::FinalReport => StageId::Final,
            Tool::GetMetric | Tool::Tune => return None,
        })
    }

    pub fn for_stage(stage: StageId) -> Tool {
        match stage {
            StageId::Setup => Tool::Setup,
            StageId::Synthesis => Tool::Synthesis,
            StageId::Floorplan => Tool::Floorplan,
            StageId::Placement => Tool::Placement,
            StageId::Cts => Tool::Cts,
            StageId::GlobalRoute => Tool::GlobalRoute,
            StageId::DetailRoute => Tool::DetailRoute,
            StageId::Final => Tool::FinalReport,
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStep {
    /// 1-based.
    pub index: usize,
    pub tool: Tool,
    pub description: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<TaskStep>,
    /// The plan picks up an already-started flow, so its first stage step
    /// need not be `setup`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PlanViolation {
    #[error("plan has no steps")]
    Empty,
    #[error("step {index}: `{tool}` appears after a later stage")]
    OutOfOrder { index: usize, tool: Tool },
    #[error("step {index}: `{tool}` needs `{missing}` earlier in the plan")]
    MissingPredecessor { index: usize, tool: Tool, missing: Tool },
    #[error("step {index}: `get_metric` needs a flow stage earlier in the plan")]
    MetricBeforeStage { index: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct PlanSyntaxError {
    pub line: usize,
    pub message: String,
}

impl Plan {
    pub fn new(tools: &[(Tool, &str)]) -> Plan {
        Plan {
            steps: tools
                .iter()
                .enumerate()
                .map(|(i, (tool, d))| TaskStep { index: i + 1, tool: *tool, description: d.to_string() })
                .collect(),
            resume: false,
        }
    }

    pub fn tools(&self) -> Vec<Tool> {
        self.steps.iter().map(|s| s.tool).collect()
    }

    /// Stage-typed steps, in plan order.
    pub fn stages(&self) -> Vec<StageId> {
        self.steps.iter().filter_map(|s| s.tool.stage()).collect()
    }

    /// Renders the plan as a fenced `plan` block.
    pub fn to_block(&self) -> String {
        let mut out = String::from("```plan\n");
        if self.resume {
            out.push_str("resume: true\n");
        }
        for s in &self.steps {
            out.push_str(&format!("{}. {}: {}\n", s.index, s.tool, s.description));
        }
        out.push_str("```");
        out
    }

    /// Finds the first ```` ```plan ```` block in `reply` and parses it.
    pub fn from_reply(reply: &str) -> Result<Plan, PlanSyntaxError> {
        let (first_line, body) = fenced_block(reply, "plan")
            .ok_or_else(|| PlanSyntaxError { line: 0, message: "no ```plan block in reply".into() })?;
        let mut plan = Plan::default();
        for (offset, raw) in body.lines().enumerate() {
            let line = first_line + offset;
            let text = raw.trim();
            if text.is_empty() {
                continue;
            }
            let err = |message: String| PlanSyntaxError { line, message };
            if let Some(flag) = text.strip_prefix("resume:") {
                if !plan.steps.is_empty() {
                    return Err(err("`resume` must precede the steps".into()));
                }
                plan.resume = match flag.trim() {
                    "true" => true,
                    "false" => false,
                    other => return Err(err(format!("resume must be true or false, not `{other}`"))),
                };
                continue;
            }
            let (number, rest) =
                text.split_once('.').ok_or_else(|| err(format!("expected `N. tool: description`, got `{text}`")))?;
            let index: usize = number.trim().parse().map_err(|_| err(format!("bad step number `{number}`")))?;
            if index != plan.steps.len() + 1 {
                return Err(err(format!("step number {index}, expected {}", plan.steps.len() + 1)));
            }
            let (tool, description) =
                rest.split_once(':').ok_or_else(|| err(format!("step {index} has no `tool:` label")))?;
            let tool = tool.trim();
            let tool = Tool::from_name(tool).ok_or_else(|| err(format!("unknown tool `{tool}`")))?;
            plan.steps.push(TaskStep { index, tool, description: description.trim().to_string() });
        }
        if plan.steps.is_empty() {
            return Err(PlanSyntaxError { line: first_line, message: "plan block has no steps".into() });
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanViolation> {
        if self.steps.is_empty() {
            return Err(PlanViolation::Empty);
        }
        let mut last: Option<StageId> = None;
        for step in &self.steps {
            match step.tool.stage() {
                Some(stage) => {
                    if last.is_some_and(|l| stage <= l) {
                        return Err(PlanViolation::OutOfOrder { index: step.index, tool: step.tool });
                    }
                    let needed = match (last, stage.predecessor()) {
                        (_, None) => None,
                        (Some(l), Some(p)) => (l != p).then_some(p),
                        (None, Some(p)) => (!self.resume).then_some(p),
                    };
                    if let Some(p) = needed {
                        // Report the first missing link rather than the direct predecessor.
                        let missing = match last {
                            Some(l) => l.successor().unwrap_or(p),
                            None => StageId::Setup,
                        };
                        return Err(PlanViolation::MissingPredecessor {
                            index: step.index,
                            tool: step.tool,
                            missing: Tool::for_stage(missing),
                        });
                    }
                    last = Some(stage);
                }
                None if step.tool == Tool::GetMetric && last.is_none_or(|l| l == StageId::Setup) => {
                    return Err(PlanViolation::MetricBeforeStage { index: step.index });
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Drives a fresh session through the flow calls the plan implies,
    /// with platform defaults. Resumed plans get their missing prefix run
    /// first.
    pub fn replay(&self, catalog: &Catalog) -> Result<(), FlowError> {
        let design = catalog.designs().next().expect("catalog has designs").name.clone();
        let platform = catalog.platforms().next().expect("catalog has platforms").name.clone();
        let mut session: Option<FlowSession> = None;
        let mut last_stage = None;
        for step in &self.steps {
            match step.tool.stage() {
                Some(StageId::Setup) => {
                    session = Some(FlowSession::setup(catalog, &design, &platform, ParamMap::new())?);
                }
                Some(stage) => {
                    let s = match &mut session {
                        Some(s) => s,
                        None if self.resume => {
                            let mut s = FlowSession::setup(catalog, &design, &platform, ParamMap::new())?;
                            for prefix in StageId::ALL.iter().filter(|p| **p > StageId::Setup && **p < stage) {
                                s.run_stage(*prefix, &ParamMap::new())?;
                            }
                            session.insert(s)
                        }
                        None => return Err(FlowError::StageOrderViolation { expected: StageId::Setup, got: stage }),
                    };
                    s.run_stage(stage, &ParamMap::new())?;
                    last_stage = Some(stage);
                }
                None if step.tool == Tool::GetMetric => {
                    let stage = last_stage.unwrap_or(StageId::Setup);
                    let s = session.as_ref().ok_or(FlowError::StageNotRun(stage.name().into()))?;
                    s.get_metric(stage.name(), &["area"])?;
                }
                None => {}
            }
        }
        Ok(())
    }
}

/// Returns the 1-based line number of the block's first content line and
/// the block body.
pub fn fenced_block<'a>(text: &'a str, tag: &str) -> Option<(usize, &'a str)> {
    let mut offset = 0;
    let mut start = None;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        match start {
            None if trimmed.strip_prefix("```").map(str::trim) == Some(tag) => {
                start = Some((n + 2, offset + line.len()));
            }
            Some((first, body_start)) if trimmed == "```" => {
                return Some((first, &text[body_start..offset]));
            }
            _ => {}
        }
        offset += line.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> Plan {
        Plan::new(&[
            (Tool::Setup, "load design"),
            (Tool::Synthesis, "synthesize"),
            (Tool::Floorplan, "floorplan at 60% utilization"),
            (Tool::Placement, "place"),
            (Tool::Cts, "clock tree"),
            (Tool::GlobalRoute, "global route"),
            (Tool::DetailRoute, "detail route"),
            (Tool::FinalReport, "report"),
            (Tool::GetMetric, "area and power"),
        ])
    }

    #[test]
    fn block_round_trip() {
        let p = full();
        let reply = format!("Here is the plan.\n\n{}\nDone.", p.to_block());
        assert_eq!(Plan::from_reply(&reply).unwrap(), p);
        let mut r = p.clone();
        r.resume = true;
        assert_eq!(Plan::from_reply(&r.to_block()).unwrap(), r);
    }

    #[test]
    fn syntax_errors() {
        assert!(Plan::from_reply("no plan here").is_err());
        assert!(Plan::from_reply("```plan\n```").is_err());
        let e = Plan::from_reply("```plan\n1. setup: a\n3. synthesis: b\n```").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(Plan::from_reply("```plan\n1. teleport: a\n```").is_err());
    }

    #[test]
    fn validation() {
        assert_eq!(full().validate(), Ok(()));
        full().replay(&Catalog::builtin()).unwrap();

        let swapped =
            Plan::new(&[(Tool::Setup, ""), (Tool::Synthesis, ""), (Tool::Placement, ""), (Tool::Floorplan, "")]);
        assert!(matches!(swapped.validate(), Err(PlanViolation::MissingPredecessor { index: 3, .. })));

        let no_synth = Plan::new(&[(Tool::Setup, ""), (Tool::Floorplan, "")]);
        assert_eq!(
            no_synth.validate(),
            Err(PlanViolation::MissingPredecessor { index: 2, tool: Tool::Floorplan, missing: Tool::Synthesis })
        );

        let report_first = Plan::new(&[(Tool::Setup, ""), (Tool::FinalReport, "")]);
        assert!(report_first.validate().is_err());

        let metric_first = Plan::new(&[(Tool::Setup, ""), (Tool::GetMetric, "")]);
        assert_eq!(metric_first.validate(), Err(PlanViolation::MetricBeforeStage { index: 2 }));

        let mut mid = Plan::new(&[(Tool::Placement, ""), (Tool::Cts, ""), (Tool::GetMetric, "")]);
        assert!(mid.validate().is_err());
        mid.resume = true;
        assert_eq!(mid.validate(), Ok(()));
        mid.replay(&Catalog::builtin()).unwrap();
    }
}
