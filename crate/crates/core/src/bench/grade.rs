// SPDX-License-Identifier: Apache-2.0
//! Three-tier grading of a session report against a case's checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::SessionReport;
use crate::flowsim::StageId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    FullFlow,
    GridSearch,
    Tuning,
    CustomOpt,
    Feedback,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::FullFlow, Category::GridSearch, Category::Tuning, Category::CustomOpt, Category::Feedback];

    pub fn name(self) -> &'static str {
        match self {
            Category::FullFlow => "full_flow",
            Category::GridSearch => "grid_search",
            Category::Tuning => "tuning",
            Category::CustomOpt => "custom_opt",
            Category::Feedback => "feedback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Comparator::Lt => value < bound,
            Comparator::Le => value <= bound,
            Comparator::Eq => value == bound,
            Comparator::Ge => value >= bound,
            Comparator::Gt => value > bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPredicate {
    pub stage: StageId,
    pub metric: String,
    pub comparator: Comparator,
    pub bound: f64,
}

impl fmt::Display for MetricPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.stage, self.metric, self.comparator.symbol(), self.bound)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSet {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_api_subsequence: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub metric_predicates: Vec<MetricPredicate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forbidden_apis: Option<Vec<String>>,
    pub must_terminate_ok: bool,
}

impl CheckSet {
    pub fn is_empty(&self) -> bool {
        self.expected_api_subsequence.is_none()
            && self.metric_predicates.is_empty()
            && self.forbidden_apis.is_none()
            && !self.must_terminate_ok
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.is_empty() {
            return Err("check set is empty".into());
        }
        if let Some(p) = self.metric_predicates.iter().find(|p| !p.bound.is_finite()) {
            return Err(format!("predicate `{p}` has a non-finite bound"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub id: String,
    pub category: Category,
    pub requirement: String,
    pub checks: CheckSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
}

impl Grade {
    fn rank(self) -> u8 {
        match self {
            Grade::A => 2,
            Grade::B => 1,
            Grade::C => 0,
        }
    }
}

impl PartialOrd for Grade {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A is the greatest.
impl Ord for Grade {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graded {
    pub grade: Grade,
    pub reasons: Vec<String>,
}

fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// C when there is no valid plan; B when the script is missing, does not
/// parse, faults, or misses a check; A otherwise. Never fails.
pub fn grade_case(case: &EvalCase, report: &SessionReport) -> Graded {
    let mut reasons = Vec::new();
    if let Some(e) = &report.plan_error {
        reasons.push(format!("plan rejected: {}", serde_json::to_string(e).unwrap_or_default()));
        return Graded { grade: Grade::C, reasons };
    }
    if report.plan.is_none() {
        reasons.push("no plan".into());
        return Graded { grade: Grade::C, reasons };
    }
    if let Some(e) = &report.script_error {
        reasons.push(format!("script rejected: {}", e.message));
    } else if report.script.is_none() {
        reasons.push("no script".into());
    } else if !report.executed {
        reasons.push("script was not executed".into());
    }
    for f in &report.faults {
        reasons.push(format!("runtime fault: {f}"));
    }

    let checks = &case.checks;
    let calls = report.trace.api_sequence();
    if checks.must_terminate_ok && !(report.executed && report.faults.is_empty()) {
        reasons.push("run did not terminate cleanly".into());
    }
    if let Some(expected) = &checks.expected_api_subsequence {
        if !is_subsequence(expected, &calls) {
            reasons.push(format!("trace lacks the call subsequence [{}]", expected.join(", ")));
        }
    }
    if let Some(forbidden) = &checks.forbidden_apis {
        for api in forbidden.iter().filter(|a| calls.contains(a)) {
            reasons.push(format!("forbidden call `{api}`"));
        }
    }
    for p in &checks.metric_predicates {
        match report.trace.last_stage_metrics(p.stage).and_then(|m| m.get(&p.metric)) {
            None => reasons.push(format!("`{p}`: no {} metrics in the trace", p.stage)),
            Some(v) if !p.comparator.holds(v, p.bound) => reasons.push(format!("`{p}` fails with {v}")),
            Some(_) => {}
        }
    }
    let grade = if reasons.is_empty() { Grade::A } else { Grade::B };
    Graded { grade, reasons }
}
