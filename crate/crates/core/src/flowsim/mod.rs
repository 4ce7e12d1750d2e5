// SPDX-License-Identifier: Apache-2.0
//! Deterministic stand-in for the RTL-to-GDSII tool API.
//!
//! A [`FlowSession`] tracks one run of a design through the staged flow.
//! Metrics come from a closed-form cost model (see [`cost`]) so every run is
//! reproducible bit for bit.

mod catalog;
pub mod cost;
mod session;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, CatalogError, DesignSpec, PlatformSpec};
pub use cost::{evaluate, Knobs};
pub use session::FlowSession;

/// Flow stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    Setup,
    Synthesis,
    Floorplan,
    Placement,
    Cts,
    GlobalRoute,
    DetailRoute,
    Final,
}

impl StageId {
    pub const ALL: [StageId; 8] = [
        StageId::Setup,
        StageId::Synthesis,
        StageId::Floorplan,
        StageId::Placement,
        StageId::Cts,
        StageId::GlobalRoute,
        StageId::DetailRoute,
        StageId::Final,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn predecessor(self) -> Option<StageId> {
        match self.index() {
            0 => None,
            i => Some(StageId::ALL[i - 1]),
        }
    }

    pub fn successor(self) -> Option<StageId> {
        StageId::ALL.get(self.index() + 1).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StageId::Setup => "setup",
            StageId::Synthesis => "synthesis",
            StageId::Floorplan => "floorplan",
            StageId::Placement => "placement",
            StageId::Cts => "cts",
            StageId::GlobalRoute => "global_route",
            StageId::DetailRoute => "detail_route",
            StageId::Final => "final",
        }
    }

    /// Method name on the scripting handle that runs this stage.
    pub fn api_name(self) -> &'static str {
        match self {
            StageId::Setup => "setup",
            StageId::Synthesis => "run_synthesis",
            StageId::Floorplan => "floorplan",
            StageId::Placement => "placement",
            StageId::Cts => "cts",
            StageId::GlobalRoute => "global_route",
            StageId::DetailRoute => "detail_route",
            StageId::Final => "final_report",
        }
    }

    pub fn from_api_name(name: &str) -> Option<StageId> {
        StageId::ALL.into_iter().find(|s| s.api_name() == name)
    }

    /// Resolves the stage names scripts pass to `get_metric`, including the
    /// short forms `place` and `route`.
    pub fn from_metric_stage(name: &str) -> Option<StageId> {
        Some(match name {
            "synthesis" | "synth" => StageId::Synthesis,
            "floorplan" => StageId::Floorplan,
            "placement" | "place" => StageId::Placement,
            "cts" => StageId::Cts,
            "global_route" | "groute" | "grt" => StageId::GlobalRoute,
            "detail_route" | "route" | "droute" | "drt" => StageId::DetailRoute,
            "final" => StageId::Final,
            _ => return None,
        })
    }

    /// Parameter names accepted by this stage.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            StageId::Setup => &["verilog"],
            StageId::Synthesis => &["clock_period"],
            StageId::Floorplan => {
                &["core_utilization", "core_aspect_ratio", "core_margins", "macro_place_halo", "macro_place_channel"]
            }
            StageId::Placement => &["density"],
            StageId::Cts => &["tns_end_percent"],
            StageId::GlobalRoute | StageId::DetailRoute | StageId::Final => &[],
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageId {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageId::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| FlowError::UnknownStage(s.to_string()))
    }
}

/// Numeric range a stage parameter must fall in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
    pub hi_inclusive: bool,
}

impl Bounds {
    const POSITIVE: Bounds = Bounds { lo: 0.0, hi: f64::INFINITY, lo_inclusive: false, hi_inclusive: false };

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_inclusive { v >= self.lo } else { v > self.lo };
        let below = if self.hi_inclusive { v <= self.hi } else { v < self.hi };
        v.is_finite() && above && below
    }

    pub fn for_param(name: &str) -> Option<Bounds> {
        Some(match name {
            "clock_period" | "core_aspect_ratio" | "core_margins" | "macro_place_halo" | "macro_place_channel" => {
                Bounds::POSITIVE
            }
            "core_utilization" => Bounds { lo: 0.0, hi: 100.0, lo_inclusive: false, hi_inclusive: true },
            "density" => Bounds { lo: 0.0, hi: 1.0, lo_inclusive: false, hi_inclusive: true },
            "tns_end_percent" => Bounds { lo: 0.0, hi: 100.0, lo_inclusive: true, hi_inclusive: true },
            _ => return None,
        })
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_inclusive { '[' } else { '(' };
        let close = if self.hi_inclusive { ']' } else { ')' };
        if self.hi.is_infinite() {
            write!(f, "{open}{}, inf{close}", self.lo)
        } else {
            write!(f, "{open}{}, {}{close}", self.lo, self.hi)
        }
    }
}

/// A stage parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

/// Quality-of-results metrics reported after a stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub area: f64,
    pub power: f64,
    pub wns: f64,
    pub tns: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 4] = ["area", "power", "wns", "tns"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "area" => Some(self.area),
            "power" => Some(self.power),
            "wns" => Some(self.wns),
            "tns" => Some(self.tns),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowError {
    #[error("unknown design `{0}`")]
    UnknownDesign(String),
    #[error("unknown platform `{0}`")]
    UnknownPlatform(String),
    #[error("stage order violation: {got} requires {expected} to have run")]
    StageOrderViolation { expected: StageId, got: StageId },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` = {value} outside {range}")]
    ParamOutOfRange { name: String, value: f64, range: String },
    #[error("parameter `{0}` has the wrong type")]
    ParamType(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("stage `{0}` has not run")]
    StageNotRun(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}
