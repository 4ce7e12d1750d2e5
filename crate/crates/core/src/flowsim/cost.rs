// SPDX-License-Identifier: Apache-2.0
//! Closed-form cost model.
//!
//! With platform scale `s`, gate count `G`, base critical path `D0`, base
//! power `P0`, clock period `T`, core utilization `u` (percent), placement
//! density `d` and CTS repair percentage `p`:
//!
//! ```text
//! effort      e = clamp(D0*s/T, 0.5, 2.0)
//! cell area   A = G * 2.0 * s^2 * (0.8 + 0.2*e)
//! die area      = A * 100/u
//! wire factor w = 1 + 0.5*(1 - d)
//! congestion  c = 0.05 if d > 0.85 else 0
//! recovery    r = 0.003*p
//! crit path   C = D0*s * (1 + 0.1*u/100) * (1 + 0.1*(1 - d)) * (1 - r) * (1 + c)
//! wns = T - C;  tns = min(0, wns)*G/1000;  power = P0*s*(0.5 + 0.5*w)/T
//! ```
//!
//! Evaluation order is fixed so results are bit-identical across runs.

use super::{DesignSpec, MetricSet, PlatformSpec};

/// The parameters that influence metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knobs {
    pub clock_period: f64,
    pub core_utilization: f64,
    pub density: f64,
    pub tns_end_percent: f64,
}

impl Knobs {
    /// Platform defaults, with the clock at 1.25x the scaled base critical path.
    pub fn defaults(design: &DesignSpec, platform: &PlatformSpec) -> Knobs {
        Knobs {
            clock_period: default_clock_period(design, platform),
            core_utilization: platform.default_core_utilization,
            density: platform.default_density,
            tns_end_percent: platform.default_tns_end_percent,
        }
    }
}

pub fn default_clock_period(design: &DesignSpec, platform: &PlatformSpec) -> f64 {
    1.25 * design.base_crit_path * platform.scale
}

pub fn evaluate(design: &DesignSpec, platform: &PlatformSpec, knobs: &Knobs) -> MetricSet {
    let s = platform.scale;
    let g = design.gate_count as f64;
    let d0 = design.base_crit_path;
    let p0 = design.base_power;
    let Knobs { clock_period: t, core_utilization: u, density: d, tns_end_percent: p } = *knobs;

    let effort = (d0 * s / t).clamp(0.5, 2.0);
    let cell_area = g * 2.0 * (s * s) * (0.8 + 0.2 * effort);
    let area = cell_area * 100.0 / u;
    let wire = 1.0 + 0.5 * (1.0 - d);
    let congestion = if d > 0.85 { 0.05 } else { 0.0 };
    let recovery = 0.003 * p;
    let crit = d0 * s * (1.0 + 0.1 * u / 100.0) * (1.0 + 0.1 * (1.0 - d)) * (1.0 - recovery) * (1.0 + congestion);
    let wns = t - crit;
    let tns = wns.min(0.0) * g / 1000.0;
    let power = p0 * s * (0.5 + 0.5 * wire) / t;
    MetricSet { area, power, wns, tns }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowsim::Catalog;

    #[test]
    fn gcd_sky130_hand_evaluation() {
        let cat = Catalog::builtin();
        let design = cat.design("gcd").unwrap();
        let platform = cat.platform("sky130").unwrap();
        let m = evaluate(
            design,
            platform,
            &Knobs { clock_period: 0.74, core_utilization: 70.0, density: 0.7, tns_end_percent: 50.0 },
        );
        // e = 0.9/0.74; A = 1200*(0.8+0.2e); area = A/0.7
        // C = 0.9*1.07*1.03*0.85; power = 1.5*1.075/0.74
        assert!((m.area - 1788.4169884169885).abs() < 1e-9, "{}", m.area);
        assert!((m.power - 2.179054054054054).abs() < 1e-12, "{}", m.power);
        assert!((m.wns - (-0.1031065000000001)).abs() < 1e-12, "{}", m.wns);
        assert!((m.tns - (-0.061863900000000055)).abs() < 1e-12, "{}", m.tns);
    }

    #[test]
    fn default_clock_has_headroom() {
        let cat = Catalog::builtin();
        for design in cat.designs() {
            for platform in cat.platforms() {
                let m = evaluate(design, platform, &Knobs::defaults(design, platform));
                assert!(m.wns > 0.0, "{} {}", design.name, platform.name);
                assert_eq!(m.tns, 0.0);
            }
        }
    }
}
