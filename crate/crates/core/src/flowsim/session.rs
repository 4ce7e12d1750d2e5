// SPDX-License-Identifier: Apache-2.0
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cost::{self, Knobs};
use super::{Bounds, Catalog, DesignSpec, FlowError, MetricSet, ParamMap, ParamValue, PlatformSpec, StageId};

/// One in-progress run of a design through the flow.
///
/// `completed` is always downward closed: a stage is present only if every
/// earlier stage is. Re-running a stage drops every later stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSession {
    design: DesignSpec,
    platform: PlatformSpec,
    completed: BTreeSet<StageId>,
    stage_params: BTreeMap<StageId, ParamMap>,
    stage_metrics: BTreeMap<StageId, MetricSet>,
}

impl FlowSession {
    pub fn setup(
        catalog: &Catalog,
        design_name: &str,
        platform: &str,
        extra: ParamMap,
    ) -> Result<FlowSession, FlowError> {
        let design = catalog.design(design_name).ok_or_else(|| FlowError::UnknownDesign(design_name.to_string()))?;
        let platform = catalog.platform(platform).ok_or_else(|| FlowError::UnknownPlatform(platform.to_string()))?;
        for (name, value) in &extra {
            if name != "verilog" {
                return Err(FlowError::UnknownParameter(name.clone()));
            }
            if !matches!(value, ParamValue::Text(_)) {
                return Err(FlowError::ParamType(name.clone()));
            }
        }
        Ok(FlowSession {
            design: design.clone(),
            platform: platform.clone(),
            completed: BTreeSet::from([StageId::Setup]),
            stage_params: BTreeMap::from([(StageId::Setup, extra)]),
            stage_metrics: BTreeMap::new(),
        })
    }

    /// Convenience for callers holding a shared catalog.
    pub fn setup_shared(catalog: &Arc<Catalog>, design_name: &str, platform: &str) -> Result<FlowSession, FlowError> {
        FlowSession::setup(catalog, design_name, platform, ParamMap::new())
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn platform(&self) -> &PlatformSpec {
        &self.platform
    }

    pub fn completed(&self) -> &BTreeSet<StageId> {
        &self.completed
    }

    pub fn is_completed(&self, stage: StageId) -> bool {
        self.completed.contains(&stage)
    }

    /// Latest completed stage.
    pub fn current_stage(&self) -> StageId {
        *self.completed.last().expect("setup is always completed")
    }

    pub fn stage_params(&self, stage: StageId) -> Option<&ParamMap> {
        self.stage_params.get(&stage)
    }

    pub fn stage_metrics(&self, stage: StageId) -> Option<&MetricSet> {
        self.stage_metrics.get(&stage)
    }

    /// Runs `stage` with `params`; unspecified parameters take platform
    /// defaults. The session is left unchanged on error.
    pub fn run_stage(&mut self, stage: StageId, params: &ParamMap) -> Result<MetricSet, FlowError> {
        let Some(expected) = stage.predecessor() else {
            // Setup goes through `FlowSession::setup`.
            return Err(FlowError::UnknownStage(stage.name().to_string()));
        };
        if !self.completed.contains(&expected) {
            return Err(FlowError::StageOrderViolation { expected, got: stage });
        }
        let allowed = stage.parameters();
        for (name, value) in params {
            if !allowed.contains(&name.as_str()) {
                return Err(FlowError::UnknownParameter(name.clone()));
            }
            let ParamValue::Number(v) = value else {
                return Err(FlowError::ParamType(name.clone()));
            };
            let bounds = Bounds::for_param(name).expect("every numeric stage parameter has bounds");
            if !bounds.contains(*v) {
                return Err(FlowError::ParamOutOfRange { name: name.clone(), value: *v, range: bounds.to_string() });
            }
        }

        self.completed.retain(|s| *s < stage);
        self.stage_params.retain(|s, _| *s < stage);
        self.stage_metrics.retain(|s, _| *s < stage);

        self.completed.insert(stage);
        self.stage_params.insert(stage, params.clone());
        let metrics = cost::evaluate(&self.design, &self.platform, &self.knobs());
        self.stage_metrics.insert(stage, metrics);
        Ok(metrics)
    }

    pub fn final_report(&mut self) -> Result<MetricSet, FlowError> {
        self.run_stage(StageId::Final, &ParamMap::new())
    }

    /// Values of `metrics` at `stage`, in request order.
    pub fn get_metric<S: AsRef<str>>(&self, stage: &str, metrics: &[S]) -> Result<Vec<f64>, FlowError> {
        for m in metrics {
            if !MetricSet::NAMES.contains(&m.as_ref()) {
                return Err(FlowError::UnknownMetric(m.as_ref().to_string()));
            }
        }
        let id = StageId::from_metric_stage(stage).ok_or_else(|| FlowError::UnknownStage(stage.to_string()))?;
        let set = self.stage_metrics.get(&id).ok_or_else(|| FlowError::StageNotRun(stage.to_string()))?;
        Ok(metrics.iter().map(|m| set.get(m.as_ref()).expect("validated above")).collect())
    }

    /// Knob values in effect given the stages completed so far.
    pub fn knobs(&self) -> Knobs {
        let mut knobs = Knobs::defaults(&self.design, &self.platform);
        for params in self.stage_params.values() {
            for (name, value) in params {
                let ParamValue::Number(v) = value else { continue };
                match name.as_str() {
                    "clock_period" => knobs.clock_period = *v,
                    "core_utilization" => knobs.core_utilization = *v,
                    "density" => knobs.density = *v,
                    "tns_end_percent" => knobs.tns_end_percent = *v,
                    _ => {}
                }
            }
        }
        knobs
    }
}
