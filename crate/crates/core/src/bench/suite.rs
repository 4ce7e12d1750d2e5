// SPDX-License-Identifier: Apache-2.0
//! The built-in case suite, suite files, and parallel suite runs.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grade::{grade_case, Category, CheckSet, Comparator, EvalCase, Grade, MetricPredicate};
use super::BenchError;
use crate::agent::{run_requirement, Backend, BackendConfig, Requirement};
use crate::flowsim::{Catalog, StageId};
use crate::miniscript::{format_real, HostEnv, RuntimeLimits};

pub const SUITE_SEED: u64 = 0x5eed_0050;
pub const CASES_PER_CATEGORY: usize = 10;

/// The five case-study requirements, one per category.
pub const TASK_REQUIREMENTS: [(Category, &str); 5] = [
    (
        Category::FullFlow,
        "I want to test the area and power performance of the design \"leo\" on \"sky130\" setting core utilization is 60%. I need to perform cts, routing, placement, and so on.",
    ),
    (
        Category::GridSearch,
        "Your task is to grid search on or the design \"how\" on \"gf180\" platform for parameters core_utilization, clk period, and placement density.",
    ),
    (
        Category::Tuning,
        "For the design \"aes\" on \"nangate45\" platform, fix clock period to be 5. Write me a script to optimize area and power using the parameter tuning method.",
    ),
    (
        Category::CustomOpt,
        "Please provide an optimal digital layout for our \"high_end_gpu\" project in the \"nangate45\" technology. Follow these steps:\n1. Keep the clock period static at 5 during the synthesis.\n2. At the floorplan stage, adjust only the core utilization, ranging it from 60% to 85% with a step of 5% and keep the rest of the parameters as their default values.\n3. At the placement stage, try adjusting the density from 0.55 to 1 with an increment of 0.05.\n4. At the CTS stage, fix from 30% to 60% of the violating paths with a step of 5%.\nLastly, gather metrics for chip area and power consumption once routing is finished.",
    ),
    (
        Category::Feedback,
        "Try to find out the smallest valid clock period for the design \"leon\" on \"asap7\" platform. Note that a clock period is valid only if the \"wns\" metric at the final stage is non negative.",
    ),
];

fn stage_calls(end: StageId) -> Vec<String> {
    StageId::ALL.into_iter().filter(|s| *s <= end).map(|s| s.api_name().to_string()).collect()
}

fn with_metric(mut calls: Vec<String>) -> Vec<String> {
    calls.push("get_metric".into());
    calls
}

fn predicate(stage: StageId, metric: &str, comparator: Comparator, bound: f64) -> MetricPredicate {
    MetricPredicate { stage, metric: metric.into(), comparator, bound }
}

/// The checks every case of a category must pass.
pub fn category_checks(category: Category) -> CheckSet {
    let positive_ppa =
        |stage| vec![predicate(stage, "area", Comparator::Gt, 0.0), predicate(stage, "power", Comparator::Gt, 0.0)];
    match category {
        Category::FullFlow => CheckSet {
            expected_api_subsequence: Some(with_metric(stage_calls(StageId::Final))),
            metric_predicates: [
                positive_ppa(StageId::Final),
                vec![predicate(StageId::Final, "tns", Comparator::Le, 0.0)],
            ]
            .concat(),
            forbidden_apis: None,
            must_terminate_ok: true,
        },
        Category::GridSearch | Category::Tuning => CheckSet {
            expected_api_subsequence: Some(with_metric(stage_calls(StageId::Final))),
            metric_predicates: positive_ppa(StageId::Final),
            forbidden_apis: None,
            must_terminate_ok: true,
        },
        Category::CustomOpt => CheckSet {
            expected_api_subsequence: Some(with_metric(stage_calls(StageId::DetailRoute))),
            metric_predicates: positive_ppa(StageId::DetailRoute),
            forbidden_apis: Some(vec![StageId::Final.api_name().into()]),
            must_terminate_ok: true,
        },
        // The search stops at the first valid period, so the last final run meets timing.
        Category::Feedback => CheckSet {
            expected_api_subsequence: Some(with_metric(stage_calls(StageId::Final))),
            metric_predicates: vec![predicate(StageId::Final, "wns", Comparator::Ge, 0.0)],
            forbidden_apis: None,
            must_terminate_ok: true,
        },
    }
}

struct Pick<'a> {
    design: &'a str,
    platform: &'a str,
    /// Unscaled critical path times platform scale: the nominal delay.
    nominal: f64,
}

fn pick<'a, R: Rng>(rng: &mut R, catalog: &'a Catalog) -> Pick<'a> {
    let designs: Vec<_> = catalog.designs().collect();
    let platforms: Vec<_> = catalog.platforms().collect();
    let d = designs.choose(rng).expect("catalog has designs");
    let p = platforms.choose(rng).expect("catalog has platforms");
    Pick { design: &d.name, platform: &p.name, nominal: d.base_crit_path * p.scale }
}

/// Rounds up to two decimals so a candidate never falls below its multiple.
fn ceil2(x: f64) -> String {
    format_real((x * 100.0).ceil() / 100.0)
}

/// A randomized requirement for `category`, phrased like the case studies.
pub fn templated_requirement<R: Rng>(rng: &mut R, catalog: &Catalog, category: Category) -> String {
    template(rng, catalog, category, false)
}

/// Like [`templated_requirement`], but tuning requests always carry an
/// evaluation budget.
pub fn bounded_requirement<R: Rng>(rng: &mut R, catalog: &Catalog, category: Category) -> String {
    template(rng, catalog, category, true)
}

fn template<R: Rng>(rng: &mut R, catalog: &Catalog, category: Category, bounded: bool) -> String {
    let Pick { design, platform, nominal } = pick(rng, catalog);
    match category {
        Category::FullFlow => {
            let u = rng.random_range(8..=16) * 5;
            let wants = ["area and power", "power and timing", "area, power and wns", "timing"].choose(rng).unwrap();
            format!(
                "I want to test the {wants} performance of the design \"{design}\" on \"{platform}\" setting core utilization is {u}%. I need to perform cts, routing, placement, and so on."
            )
        }
        Category::GridSearch => {
            let u0 = rng.random_range(10..=14) * 5;
            let c0 = ceil2(nominal);
            let c1 = ceil2(nominal * 1.5);
            let d0 = rng.random_range(5..=7);
            format!(
                "Your task is to grid search on the design \"{design}\" on \"{platform}\" platform for parameters core_utilization [{u0}, {}], clk period [{c0}, {c1}], and placement density [0.{d0}, 0.{}].",
                u0 + 10,
                d0 + 2
            )
        }
        Category::Tuning => {
            let clock = ceil2(nominal * rng.random_range(1.0..2.0));
            let budgets: &[Option<u32>] =
                if bounded { &[Some(10), Some(20), Some(30)] } else { &[None, Some(20), Some(50), Some(100)] };
            let budget = budgets.choose(rng).copied().flatten();
            let limit = budget.map(|b| format!(" Use at most {b} evaluations.")).unwrap_or_default();
            format!(
                "For the design \"{design}\" on \"{platform}\" platform, fix clock period to be {clock}. Write me a script to optimize area and power using the parameter tuning method.{limit}"
            )
        }
        Category::CustomOpt => {
            let clock = ceil2(nominal * rng.random_range(1.0..2.0));
            let u0 = rng.random_range(10..=13) * 5;
            let d0 = rng.random_range(50..=70);
            let t0 = rng.random_range(4..=8) * 5;
            format!(
                "Please provide an optimal digital layout for our \"{design}\" project in the \"{platform}\" technology. Follow these steps:\n1. Keep the clock period static at {clock} during the synthesis.\n2. At the floorplan stage, adjust only the core utilization, ranging it from {u0}% to {}% with a step of 5%.\n3. At the placement stage, try adjusting the density from {} to {} with an increment of 0.05.\n4. At the CTS stage, fix from {t0}% to {}% of the violating paths with a step of 5%.\nLastly, gather metrics for chip area and power consumption once routing is finished.",
                u0 + 15,
                format_real(d0 as f64 / 100.0),
                format_real((d0 + 15) as f64 / 100.0),
                t0 + 10
            )
        }
        Category::Feedback => {
            let candidates: Vec<String> = [0.5, 0.8, 1.3, 2.0].iter().map(|m| ceil2(nominal * m)).collect();
            format!(
                "Try to find out the smallest valid clock period for the design \"{design}\" on \"{platform}\" platform among [{}]. Note that a clock period is valid only if the \"wns\" metric at the final stage is non negative.",
                candidates.join(", ")
            )
        }
    }
}

/// 50 cases, ten per category; the first of each is the case-study requirement.
pub fn builtin_suite() -> Vec<EvalCase> {
    let catalog = Catalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut cases = Vec::new();
    for (category, task) in TASK_REQUIREMENTS {
        for i in 0..CASES_PER_CATEGORY {
            let requirement =
                if i == 0 { task.to_string() } else { templated_requirement(&mut rng, &catalog, category) };
            cases.push(EvalCase {
                id: format!("{}-{:02}", category.name(), i + 1),
                category,
                requirement,
                checks: category_checks(category),
            });
        }
    }
    cases
}

#[derive(Debug, Serialize, Deserialize)]
struct SuiteFile {
    #[serde(rename = "case")]
    cases: Vec<EvalCase>,
}

pub fn validate_suite(cases: &[EvalCase]) -> Result<(), BenchError> {
    if cases.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let mut seen = HashSet::new();
    for c in cases {
        if !seen.insert(c.id.as_str()) {
            return Err(BenchError::DuplicateCase(c.id.clone()));
        }
        c.checks.validate().map_err(|reason| BenchError::InvalidCase { id: c.id.clone(), reason })?;
    }
    Ok(())
}

pub fn suite_to_toml(cases: &[EvalCase]) -> String {
    toml::to_string(&SuiteFile { cases: cases.to_vec() }).expect("suite serializes")
}

pub fn suite_from_toml(text: &str) -> Result<Vec<EvalCase>, BenchError> {
    let file: SuiteFile = toml::from_str(text).map_err(|e| BenchError::SuiteFormat(e.to_string()))?;
    validate_suite(&file.cases)?;
    Ok(file.cases)
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, BenchError> {
    suite_from_toml(&std::fs::read_to_string(path)?)
}

pub fn save_suite(cases: &[EvalCase], path: impl AsRef<Path>) -> Result<(), BenchError> {
    Ok(std::fs::write(path, suite_to_toml(cases))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub category: Category,
    pub grade: Grade,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub backend: String,
    pub per_case: Vec<CaseResult>,
    /// Percent of cases per grade, keyed "A", "B", "C".
    pub percent: BTreeMap<String, f64>,
}

impl DistributionReport {
    fn from_results(backend: &str, per_case: Vec<CaseResult>) -> DistributionReport {
        let n = per_case.len() as f64;
        let percent = [Grade::A, Grade::B, Grade::C]
            .into_iter()
            .map(|g| {
                let k = per_case.iter().filter(|c| c.grade == g).count() as f64;
                (format!("{g:?}"), 100.0 * k / n)
            })
            .collect();
        DistributionReport { backend: backend.to_string(), per_case, percent }
    }

    pub fn percent_of(&self, grade: Grade) -> f64 {
        self.percent.get(&format!("{grade:?}")).copied().unwrap_or(0.0)
    }

    /// Percent of `grade` among cases of one category.
    pub fn category_percent(&self, category: Category, grade: Grade) -> f64 {
        let cases: Vec<_> = self.per_case.iter().filter(|c| c.category == category).collect();
        if cases.is_empty() {
            return 0.0;
        }
        100.0 * cases.iter().filter(|c| c.grade == grade).count() as f64 / cases.len() as f64
    }
}

pub const SUITE_PLAN_RETRIES: u32 = 2;

/// Grades every case concurrently. Aborts only on infrastructure errors.
pub fn run_suite_with(
    cases: &[EvalCase],
    backend: &dyn Backend,
    env: &HostEnv,
    limits: &RuntimeLimits,
) -> Result<DistributionReport, BenchError> {
    validate_suite(cases)?;
    let per_case = cases
        .par_iter()
        .map(|case| {
            let requirement = Requirement::new(&case.requirement)?;
            let report = run_requirement(&requirement, backend, SUITE_PLAN_RETRIES, env, limits)?;
            let graded = grade_case(case, &report);
            Ok(CaseResult {
                id: case.id.clone(),
                category: case.category,
                grade: graded.grade,
                reasons: graded.reasons,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    Ok(DistributionReport::from_results(backend.name(), per_case))
}

pub fn run_suite(
    cases: &[EvalCase],
    config: &BackendConfig,
    env: &HostEnv,
    limits: &RuntimeLimits,
) -> Result<DistributionReport, BenchError> {
    validate_suite(cases)?;
    let backend = config.build()?;
    run_suite_with(cases, backend.as_ref(), env, limits)
}
