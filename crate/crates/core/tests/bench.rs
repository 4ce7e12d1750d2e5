// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use edagent_core::agent::{run_requirement, Plan, Requirement, RuleBackend, RuleVariant, SessionReport};
use edagent_core::bench::*;
use edagent_core::flowsim::StageId;
use edagent_core::miniscript::{interpret, parse, HostEnv, RuntimeLimits};
use proptest::prelude::*;

fn env() -> (HostEnv, RuntimeLimits) {
    (HostEnv::default(), RuntimeLimits::default())
}

fn report_for(text: &str, variant: RuleVariant) -> SessionReport {
    let (env, limits) = env();
    run_requirement(&Requirement::new(text).unwrap(), &RuleBackend::new(variant), 2, &env, &limits).unwrap()
}

fn case(category: Category) -> EvalCase {
    builtin_suite().into_iter().find(|c| c.category == category).unwrap()
}

#[test]
fn builtin_suite_shape() {
    let suite = builtin_suite();
    assert_eq!(suite.len(), 50);
    validate_suite(&suite).unwrap();
    for cat in Category::ALL {
        assert_eq!(suite.iter().filter(|c| c.category == cat).count(), 10);
    }
    for (cat, text) in TASK_REQUIREMENTS {
        assert!(suite.iter().any(|c| c.category == cat && c.requirement == text));
    }
    assert_eq!(builtin_suite(), suite);
}

#[test]
fn suite_grades_separate_the_tiers() {
    let (env, limits) = env();
    let suite = builtin_suite();
    let oracle = run_suite_with(&suite, &RuleBackend::new(RuleVariant::Oracle), &env, &limits).unwrap();
    let failing: Vec<_> = oracle.per_case.iter().filter(|c| c.grade != Grade::A).collect();
    assert!(failing.is_empty(), "{failing:#?}");
    assert_eq!(oracle.percent_of(Grade::A), 100.0);

    let codegen = run_suite_with(&suite, &RuleBackend::new(RuleVariant::BrokenCodegen), &env, &limits).unwrap();
    assert!(codegen.percent_of(Grade::B) >= 90.0, "{:?}", codegen.percent);

    let planner = run_suite_with(&suite, &RuleBackend::new(RuleVariant::BrokenPlanner), &env, &limits).unwrap();
    assert_eq!(planner.category_percent(Category::FullFlow, Grade::C), 100.0);

    let again = run_suite_with(&suite, &RuleBackend::new(RuleVariant::Oracle), &env, &limits).unwrap();
    assert_eq!(serde_json::to_string(&oracle).unwrap(), serde_json::to_string(&again).unwrap());
    let json: serde_json::Value = serde_json::to_value(&oracle).unwrap();
    assert_eq!(json["percent"]["A"], 100.0);
    assert_eq!(json["per_case"].as_array().unwrap().len(), 50);
}

#[test]
fn empty_and_duplicate_suites_are_rejected() {
    let (env, limits) = env();
    let backend = RuleBackend::new(RuleVariant::Oracle);
    assert!(matches!(run_suite_with(&[], &backend, &env, &limits), Err(BenchError::EmptySuite)));
    let c = case(Category::FullFlow);
    assert!(matches!(validate_suite(&[c.clone(), c.clone()]), Err(BenchError::DuplicateCase(_))));
    let mut empty = c;
    empty.checks = CheckSet::default();
    assert!(matches!(validate_suite(&[empty]), Err(BenchError::InvalidCase { .. })));
}

#[test]
fn suite_toml_round_trip() {
    let suite = builtin_suite();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.toml");
    save_suite(&suite, &path).unwrap();
    assert_eq!(load_suite(&path).unwrap(), suite);
    assert!(matches!(suite_from_toml("case = 3"), Err(BenchError::SuiteFormat(_))));
}

#[test]
fn grade_tiers_on_single_reports() {
    let c = case(Category::FullFlow);
    let graded = grade_case(&c, &report_for(&c.requirement, RuleVariant::Oracle));
    assert_eq!(graded.grade, Grade::A, "{:?}", graded.reasons);

    let graded = grade_case(&c, &report_for(&c.requirement, RuleVariant::BrokenCodegen));
    assert_eq!(graded.grade, Grade::B);
    assert!(graded.reasons.iter().any(|r| r.starts_with("script rejected")));

    // Placement before floorplan.
    let mut report = report_for(&c.requirement, RuleVariant::Oracle);
    let plan = report.plan.take().unwrap();
    let mut steps = plan.steps.clone();
    steps.swap(2, 3);
    let swapped = Plan { steps, resume: false };
    assert!(swapped.validate().is_err());
    report.plan_error = Some(edagent_core::agent::PlanFailure::Invalid { violation: swapped.validate().unwrap_err() });
    report.plan = Some(swapped);
    assert_eq!(grade_case(&c, &report).grade, Grade::C);
}

#[test]
fn wrong_results_grade_b_with_every_reason() {
    let mut c = case(Category::FullFlow);
    c.checks.metric_predicates.push(MetricPredicate {
        stage: StageId::Final,
        metric: "area".into(),
        comparator: Comparator::Lt,
        bound: 1.0,
    });
    c.checks.forbidden_apis = Some(vec!["cts".into(), "placement".into()]);
    let graded = grade_case(&c, &report_for(&c.requirement, RuleVariant::Oracle));
    assert_eq!(graded.grade, Grade::B);
    assert_eq!(graded.reasons.len(), 3, "{:?}", graded.reasons);
}

#[test]
fn grade_order() {
    assert!(Grade::A > Grade::B && Grade::B > Grade::C);
}

fn arb_predicate() -> impl Strategy<Value = MetricPredicate> {
    (
        prop::sample::select(StageId::ALL.to_vec()),
        prop::sample::select(vec!["area", "power", "wns", "tns", "bogus"]),
        prop::sample::select(vec![Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ge, Comparator::Gt]),
        -1000.0..100000.0f64,
    )
        .prop_map(|(stage, metric, comparator, bound)| MetricPredicate {
            stage,
            metric: metric.into(),
            comparator,
            bound,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grades_are_monotone_in_checks(
        idx in 0usize..5,
        variant in prop::sample::select(vec![RuleVariant::Oracle, RuleVariant::BrokenCodegen, RuleVariant::BrokenPlanner]),
        extra in arb_predicate(),
        forbid in prop::option::of(prop::sample::select(vec!["cts", "final_report", "tune", "floorplan"])),
    ) {
        let base = case(Category::ALL[idx]);
        let report = report_for(&base.requirement, variant);
        let before = grade_case(&base, &report).grade;
        let mut more = base.clone();
        more.checks.metric_predicates.push(extra);
        if let Some(f) = forbid {
            more.checks.forbidden_apis.get_or_insert_with(Vec::new).push(f.into());
        }
        let after = grade_case(&more, &report).grade;
        prop_assert!(after <= before);
        let mut fewer = base.clone();
        fewer.checks.metric_predicates.clear();
        fewer.checks.expected_api_subsequence = None;
        prop_assert!(grade_case(&fewer, &report).grade >= before);
    }
}

#[test]
fn small_dataset_validates_and_is_deterministic() {
    let (env, limits) = env();
    let backend = RuleBackend::new(RuleVariant::Oracle);
    let a = generate_instructions(10, &backend, 7, &env, &limits).unwrap();
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|r| r.validated && r.origin == Origin::Generated));
    let b = generate_instructions(10, &backend, 7, &env, &limits).unwrap();
    assert_eq!(a, b);
    let c = generate_instructions(10, &backend, 8, &env, &limits).unwrap();
    assert_ne!(a, c);
    assert!(matches!(generate_instructions(0, &backend, 7, &env, &limits), Err(BenchError::ZeroCount)));
}

#[test]
fn broken_backends_yield_flagged_records() {
    let (env, limits) = env();
    for variant in [RuleVariant::BrokenCodegen, RuleVariant::BrokenPlanner] {
        let recs = generate_instructions(10, &RuleBackend::new(variant), 3, &env, &limits).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(|r| !r.validated), "{variant:?}");
    }
}

#[test]
fn jsonl_round_trip_and_errors() {
    let (env, limits) = env();
    let recs = generate_instructions(25, &RuleBackend::new(RuleVariant::Oracle), 11, &env, &limits).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    export_jsonl(&recs, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 25);
    assert_eq!(import_jsonl(&path).unwrap(), recs);

    export_jsonl(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    assert!(import_jsonl(&path).unwrap().is_empty());

    let first = text.lines().next().unwrap();
    let truncated = format!("{first}\n\n{}\n", &first[..first.len() / 2]);
    assert!(matches!(read_jsonl(truncated.as_bytes()), Err(BenchError::MalformedLine(3))));
    assert!(matches!(import_jsonl(dir.path().join("missing")), Err(BenchError::Io(_))));
}

#[test]
fn training_sample_spans_reparse() {
    let (env, limits) = env();
    let recs = generate_instructions(15, &RuleBackend::new(RuleVariant::Oracle), 5, &env, &limits).unwrap();
    for r in &recs {
        let s = render_training_sample(r, DEFAULT_SEPARATOR).unwrap();
        let len = s.text.chars().count();
        assert!(s.response_start < s.response_end && s.response_end == len);
        let (plan, script) = parse_response(&s.response()).unwrap();
        assert_eq!(plan, Plan::from_reply(&r.plan).unwrap());
        assert_eq!(script, r.script);
        let masked: String = s.text.chars().take(s.response_start).collect();
        assert!(masked.starts_with(&r.requirement) && masked.ends_with(&format!("{DEFAULT_SEPARATOR}\n")));
    }
    assert!(matches!(render_training_sample(&recs[0], ""), Err(BenchError::EmptySeparator)));
    let mut unvalidated = recs[0].clone();
    unvalidated.validated = false;
    assert!(matches!(render_training_sample(&unvalidated, DEFAULT_SEPARATOR), Err(BenchError::Unvalidated)));
}

#[test]
fn offsets_count_characters_not_bytes() {
    let (env, limits) = env();
    let mut r = generate_instructions(1, &RuleBackend::new(RuleVariant::Oracle), 1, &env, &limits).unwrap().remove(0);
    r.requirement = format!("Überprüfe „{}“ — bitte", r.requirement);
    r.script = format!("# résumé ✓\n{}", r.script);
    let s = render_training_sample(&r, "§§ RÉPONSE §§").unwrap();
    assert_eq!(s.response_start, r.requirement.chars().count() + "§§ RÉPONSE §§".chars().count() + 2);
    assert_eq!(parse_response(&s.response()).unwrap().1, r.script);
}

#[test]
#[ignore = "full-scale run; the acceptance suite covers it"]
fn full_dataset_scale() {
    let (env, limits) = env();
    let t = Instant::now();
    let recs = generate_instructions(DEFAULT_COUNT, &RuleBackend::new(RuleVariant::Oracle), 1, &env, &limits).unwrap();
    eprintln!("{} records in {:?}", recs.len(), t.elapsed());
    assert!(recs.iter().all(|r| r.validated));
    for r in &recs {
        let ex = interpret(&parse(&r.script).unwrap(), &env, &limits);
        assert!(ex.fault.is_none());
    }
}
