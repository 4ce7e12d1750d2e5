// SPDX-License-Identifier: Apache-2.0
mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use common::golden;
use edagent_core::agent::*;
use edagent_core::flowsim::{Catalog, FlowError, StageId};
use edagent_core::miniscript::{extract_api_sequence, FaultKind, HostEnv, RuntimeLimits};

fn oracle() -> Box<dyn Backend> {
    BackendConfig::rule_based().build().unwrap()
}

fn run(text: &str, backend: &dyn Backend) -> SessionReport {
    let r = Requirement::new(text).unwrap();
    run_requirement(&r, backend, 1, &HostEnv::default(), &RuntimeLimits::default()).unwrap()
}

#[test]
fn golden_tasks_replay() {
    let backend = oracle();
    for name in golden::TASKS {
        let g = golden::load(name);
        let started = Instant::now();
        let report = run(&g.requirement, backend.as_ref());
        let elapsed = started.elapsed();
        let plan = report.plan.as_ref().unwrap_or_else(|| panic!("{name}: {:?}", report.plan_error));
        plan.validate().unwrap();
        assert!(report.faults.is_empty(), "{name}: {:?}", report.faults);
        assert_eq!(extract_api_sequence(&report.trace), g.sequence(), "{name}");
        report.trace.replay(&Catalog::builtin()).unwrap();
        if let Some(expected) = &g.final_metrics {
            let m = report.trace.last_stage_metrics(StageId::Final).unwrap();
            for (k, v) in expected {
                assert_eq!(m.get(k), Some(*v), "{name} {k}");
            }
        }
        if let Some(out) = &g.output {
            assert_eq!(&report.output, out, "{name}");
        }
        assert!(report.reproduces(&HostEnv::default(), &RuntimeLimits::default()));
        if !cfg!(debug_assertions) {
            assert!(elapsed.as_secs_f64() < 1.0, "{name} took {elapsed:?}");
        }
    }
}

#[test]
fn task1_plan_shape() {
    let g = golden::load("task1");
    let report = run(&g.requirement, oracle().as_ref());
    let tools: Vec<&str> = report.plan.unwrap().steps.iter().map(|s| s.tool.name()).collect();
    assert_eq!(
        tools,
        [
            "setup",
            "synthesis",
            "floorplan",
            "placement",
            "cts",
            "global_route",
            "detail_route",
            "final_report",
            "get_metric"
        ]
    );
}

#[test]
fn task4_script_tunes_three_parameters() {
    let g = golden::load("task4");
    let report = run(&g.requirement, oracle().as_ref());
    let script = report.script.unwrap();
    assert!(script.starts_with("def tuning_func(core_utilization, density, tns_end_percent):"));
    assert!(script.contains("tune(tuning_func, param_space)"));
    assert_eq!(report.tunes[0].evaluations, 420);
}

#[test]
fn routing_prompt_stops_at_detail_route() {
    let r = Requirement::new("Perform routing for the processor design on the asap7 platform.").unwrap();
    let mut log = Vec::new();
    let p = plan(&r, oracle().as_ref(), 0, &mut log).unwrap();
    assert_eq!(p.steps.last().unwrap().tool, Tool::DetailRoute);
    assert!(!p.resume);
    assert_eq!(p.steps.len(), 7);
}

#[test]
fn gibberish_is_a_plan_parse_error() {
    let r = Requirement::new("zorp blig quux").unwrap();
    let mut log = Vec::new();
    let err = plan(&r, oracle().as_ref(), 2, &mut log).unwrap_err();
    assert!(matches!(err, AgentError::PlanParse { .. }));
    assert_eq!(log.len(), 3, "one ask plus two retries");
    let report = run("zorp blig quux", oracle().as_ref());
    assert!(matches!(report.plan_error, Some(PlanFailure::Parse { .. })));
    assert!(!report.executed);
}

#[test]
fn unknown_design_is_captured_not_thrown() {
    let report = run("Run the full flow for design \"nonexistent\" on \"sky130\".", oracle().as_ref());
    assert_eq!(report.faults.len(), 1);
    assert_eq!(report.faults[0].kind, FaultKind::FlowError(FlowError::UnknownDesign("nonexistent".into())));
}

#[test]
fn rule_backend_is_deterministic() {
    let g = golden::load("task2");
    let a = serde_json::to_string(&run(&g.requirement, oracle().as_ref())).unwrap();
    let b = serde_json::to_string(&run(&g.requirement, oracle().as_ref())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn broken_variants_degrade_the_expected_stage() {
    let g = golden::load("task1");
    let codegen = BackendConfig::with_kind(BackendKind::RuleBrokenCodegen).build().unwrap();
    let report = run(&g.requirement, codegen.as_ref());
    assert!(report.plan.is_some() && report.plan_error.is_none());
    let err = report.script_error.as_ref().unwrap();
    assert!(err.syntax.is_some());
    assert_eq!(report.exchanges.iter().filter(|x| x.role == Role::Codegen).count(), 2);
    assert!(!report.executed);

    let planner = BackendConfig::with_kind(BackendKind::RuleBrokenPlanner).build().unwrap();
    let report = run(&g.requirement, planner.as_ref());
    assert!(matches!(
        report.plan_error,
        Some(PlanFailure::Invalid { violation: PlanViolation::MissingPredecessor { .. } })
    ));
    assert!(report.script.is_none());
}

struct Prose;
impl Backend for Prose {
    fn name(&self) -> &str {
        "prose"
    }
    fn complete(&self, _: &[Message]) -> Result<String, AgentError> {
        Ok("Sure! You should run synthesis first.".into())
    }
}

#[test]
fn prose_twice_is_script_rejected() {
    let r = Requirement::new("anything").unwrap();
    let plan = Plan::new(&[(Tool::Setup, "x")]);
    let mut log = Vec::new();
    let err = generate_script(&r, &plan, &Prose, &mut log).unwrap_err();
    assert!(matches!(err, AgentError::ScriptRejected { syntax: None, .. }));
    assert_eq!(log.len(), 2);
    // The repair round carries the rejection back to the model.
    assert_eq!(log[1].messages.len(), 4);
    assert!(log[1].messages[3].content.contains("rejected"));
}

#[test]
fn empty_requirement_rejected() {
    assert!(matches!(Requirement::new("  "), Err(AgentError::EmptyRequirement)));
    let a = Requirement::new("x").unwrap();
    assert!(a.id.starts_with("req-") && a.id.len() == 16);
}

/// A one-connection-per-request HTTP server answering from a script of
/// (status, body) pairs; records the request bodies it saw.
fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
            counter.fetch_add(1, Ordering::SeqCst);
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        bodies
    });
    (url, hits, handle)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn remote_config(url: String, env: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Remote,
        endpoint: Some(url),
        model: "test-model".into(),
        auth_env: env.into(),
        temperature: 0.2,
        timeout_secs: 5.0,
        max_retries: 2,
        backoff_ms: 1,
    }
}

#[test]
fn remote_backend_retries_server_errors_then_succeeds() {
    std::env::set_var("EDAGENT_TEST_KEY_A", "sekret");
    let (url, hits, server) =
        mock_server(vec![(503, "{}".into()), (429, "{}".into()), (200, completion("```plan\n1. setup: go\n```"))]);
    let backend = remote_config(url, "EDAGENT_TEST_KEY_A").build().unwrap();
    let reply = backend.complete(&[Message::user("hi")]).unwrap();
    assert!(reply.contains("```plan"));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    let bodies = server.join().unwrap();
    assert!(
        bodies[2].starts_with("authorization: Bearer sekret") || bodies[2].starts_with("Authorization: Bearer sekret")
    );
    let json: serde_json::Value = serde_json::from_str(bodies[2].split_once('\n').unwrap().1).unwrap();
    assert_eq!(json["model"], "test-model");
    assert_eq!(json["temperature"], 0.2);
    assert_eq!(json["messages"][0]["content"], "hi");
}

#[test]
fn remote_backend_gives_up_and_does_not_retry_client_errors() {
    std::env::set_var("EDAGENT_TEST_KEY_B", "k");
    let (url, hits, server) = mock_server(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let backend = remote_config(url, "EDAGENT_TEST_KEY_B").build().unwrap();
    assert!(matches!(backend.complete(&[]), Err(AgentError::BackendUnreachable(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    server.join().unwrap();

    let (url, hits, server) = mock_server(vec![(400, "{}".into())]);
    let backend = remote_config(url, "EDAGENT_TEST_KEY_B").build().unwrap();
    assert!(backend.complete(&[]).is_err());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    server.join().unwrap();

    let (url, _, server) = mock_server(vec![(200, "{\"nope\": 1}".into())]);
    let backend = remote_config(url, "EDAGENT_TEST_KEY_B").build().unwrap();
    assert!(matches!(backend.complete(&[]), Err(AgentError::BackendProtocol(_))));
    server.join().unwrap();
}

#[test]
fn remote_backend_needs_its_secret_and_endpoint() {
    let cfg = remote_config("http://127.0.0.1:9/x".into(), "EDAGENT_TEST_KEY_UNSET");
    let backend = cfg.build().unwrap();
    assert!(matches!(backend.complete(&[]), Err(AgentError::MissingSecret(_))));
    let mut bad = cfg.clone();
    bad.endpoint = None;
    assert!(matches!(bad.build(), Err(AgentError::Config(_))));
    // Unreachable host: transport errors are retried, then reported.
    std::env::set_var("EDAGENT_TEST_KEY_C", "k");
    let mut dead = remote_config("http://127.0.0.1:9/x".into(), "EDAGENT_TEST_KEY_C");
    dead.max_retries = 1;
    let err = dead.build().unwrap().complete(&[]).unwrap_err();
    assert!(err.is_infrastructure());
}

#[test]
fn pipeline_over_remote_backend() {
    std::env::set_var("EDAGENT_TEST_KEY_D", "k");
    let script = "eda = chateda()\neda.setup(\"gcd\", \"sky130\")\neda.run_synthesis()\nprint(eda.get_metric(\"synth\", [\"area\"]))\n";
    let (url, _, server) = mock_server(vec![
        (200, completion("```plan\n1. setup: gcd\n2. synthesis: go\n3. get_metric: area\n```")),
        (200, completion(&format!("```script\n{script}```"))),
    ]);
    let backend = remote_config(url, "EDAGENT_TEST_KEY_D").build().unwrap();
    let report = run("gcd on sky130, synthesize and tell me the area", backend.as_ref());
    assert_eq!(report.backend, "remote");
    assert_eq!(report.script.as_deref(), Some(script));
    assert!(report.faults.is_empty());
    assert_eq!(report.trace.len(), 3);
    server.join().unwrap();
}

#[test]
fn accepted_plans_replay_on_the_engine() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let catalog = Catalog::builtin();
    let mut accepted = 0;
    for _ in 0..5000 {
        let n = rng.random_range(1..8);
        let tools: Vec<(Tool, &str)> = (0..n).map(|_| (Tool::ALL[rng.random_range(0..Tool::ALL.len())], "")).collect();
        let mut plan = Plan::new(&tools);
        plan.resume = rng.random_bool(0.3);
        if plan.validate().is_ok() {
            accepted += 1;
            plan.replay(&catalog).unwrap_or_else(|e| panic!("{plan:?}: {e}"));
        }
    }
    assert!(accepted > 50, "only {accepted} plans accepted");
}
