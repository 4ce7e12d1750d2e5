// SPDX-License-Identifier: Apache-2.0

mod common;

use std::time::Duration;

use common::*;
use edagent_core::agent::{run_requirement, Requirement, RuleBackend, RuleVariant, SessionReport};
use edagent_core::flowsim::StageId;
use edagent_core::miniscript::{CallSummary, HostEnv, RuntimeLimits};
use edagent_hub::events::is_well_ordered;
use edagent_hub::{replay_trace, EventBody, HubConfig, RunState};
use serde_json::json;

fn cli_report(text: &str) -> SessionReport {
    let cfg = HubConfig::default();
    run_requirement(
        &Requirement::new(text).unwrap(),
        &RuleBackend::new(RuleVariant::Oracle),
        cfg.plan_retries,
        &HostEnv::default(),
        &RuntimeLimits::default(),
    )
    .unwrap()
}

fn kinds(events: &[edagent_hub::RunEvent]) -> Vec<&'static str> {
    events.iter().map(|e| e.body.kind()).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn approval_gate_round_trip() {
    let s = start().await;
    let sid = s.session().await;
    let run = s.submit(&sid, TASK1, false).await;
    let info = s.wait_for(&sid, &run.run_id, |st| st == RunState::AwaitingApproval).await;
    assert!(info.pending_script.as_deref().unwrap().contains("eda.setup"));
    let base = format!("/api/sessions/{sid}/runs/{}", run.run_id);

    let (status, _) = s.get(&format!("{base}/report")).await;
    assert_eq!(status, 409);
    // Paused: only planning and scripting happened; no flow activity.
    let so_far = s.hub.run(&sid, &run.run_id).unwrap().events_after(0);
    assert_eq!(kinds(&so_far), ["plan_ready", "script_ready"]);
    let EventBody::ScriptReady { awaiting_approval, .. } = &so_far[1].body else { panic!() };
    assert!(awaiting_approval);

    let (status, body) = s.post(&format!("{base}/approve"), json!({ "script": "eda = chateda(\nprint(1)" })).await;
    assert_eq!(status, 422);
    assert!(body["syntax"]["line"].as_u64().is_some(), "{body}");
    assert_eq!(s.hub.run(&sid, &run.run_id).unwrap().state(), RunState::AwaitingApproval);
    let (status, _) = s.post_raw(&format!("{base}/approve"), "{\"script\": 5}").await;
    assert_eq!(status, 422);

    let (status, _) = s.post(&format!("{base}/approve"), json!({})).await;
    assert_eq!(status, 200);
    let events = s.events(&sid, &run.run_id, "").await;
    let last = events.last().unwrap();
    let EventBody::RunFinished { state, metrics, .. } = &last.body else { panic!("{:?}", last) };
    assert_eq!(*state, RunState::Finished);
    assert_eq!(*metrics, cli_report(TASK1).metrics);

    let (status, _) = s.post(&format!("{base}/approve"), json!({})).await;
    assert_eq!(status, 409);
    let (status, report) = s.get(&format!("{base}/report")).await;
    assert_eq!(status, 200);
    assert_eq!(report["script_edited"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn edited_script_replaces_the_generated_one() {
    let s = start().await;
    let sid = s.session().await;
    let run = s.submit(&sid, TASK1, false).await;
    s.wait_for(&sid, &run.run_id, |st| st == RunState::AwaitingApproval).await;
    let script = "eda = chateda()\neda.setup(\"gcd\", \"sky130\")\neda.run_synthesis(clock_period=0.74)\nprint(eda.get_metric(\"synth\", [\"area\"]))\n";
    let (status, _) =
        s.post(&format!("/api/sessions/{sid}/runs/{}/approve", run.run_id), json!({ "script": script })).await;
    assert_eq!(status, 200);
    s.wait_for(&sid, &run.run_id, RunState::is_terminal).await;
    let report = s.hub.report(&sid, &run.run_id).unwrap();
    assert!(report.script_edited);
    assert_eq!(report.script.as_deref(), Some(script));
    assert_eq!(report.trace.api_sequence(), ["setup", "run_synthesis", "get_metric"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn transport_equivalence_and_event_completeness() {
    let s = start().await;
    let sid = s.session().await;
    for text in
        [TASK1, "Try to find out the smallest valid clock period for the design \"leon\" on \"asap7\" platform."]
    {
        let run = s.submit(&sid, text, true).await;
        let events = s.events(&sid, &run.run_id, "").await;
        assert!(is_well_ordered(&events));
        assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), (1..=events.len() as u64).collect::<Vec<_>>());
        let (status, http_bytes) = s.get_bytes(&format!("/api/sessions/{sid}/runs/{}/report", run.run_id)).await;
        assert_eq!(status, 200);
        let cli = cli_report(text);
        assert_eq!(http_bytes, serde_json::to_vec(&cli).unwrap());
        assert_eq!(replay_trace(&events), cli.trace);
        let stages = events.iter().filter(|e| matches!(e.body, EventBody::StageFinished { .. })).count();
        let started = events.iter().filter(|e| matches!(e.body, EventBody::StageStarted { .. })).count();
        // A stage that fails reports only through its api_call entry.
        let failed = cli
            .trace
            .entries
            .iter()
            .filter(|e| StageId::from_api_name(&e.api).is_some() && matches!(e.result, CallSummary::Failed { .. }))
            .count();
        assert_eq!(stages + failed, started);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_resumes_after_a_cursor() {
    let s = start().await;
    let sid = s.session().await;
    let run = s.submit(&sid, TASK1, true).await;
    let all = s.events(&sid, &run.run_id, "").await;
    assert!(all.len() > 10);
    let tail = s.events(&sid, &run.run_id, "?after=5").await;
    assert_eq!(tail, all[5..].to_vec());
    let text = s
        .client
        .get(s.url(&format!("/api/sessions/{sid}/runs/{}/events", run.run_id)))
        .header("Last-Event-ID", "9")
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(parse_sse(&text), all[9..].to_vec());
    assert!(text.contains("event: run_finished") && text.contains("id: 10\n"));
}

#[tokio::test(flavor = "multi_thread")]
async fn live_subscribers_see_every_event_in_order() {
    let s = start().await;
    let sid = s.session().await;
    let run = s.submit(&sid, TASK1, false).await;
    // Subscribe before approval so the stream has to wait for new events.
    let url = s.url(&format!("/api/sessions/{sid}/runs/{}/events", run.run_id));
    let reader = tokio::spawn({
        let client = s.client.clone();
        async move { parse_sse(&client.get(url).send().await.unwrap().text().await.unwrap()) }
    });
    s.wait_for(&sid, &run.run_id, |st| st == RunState::AwaitingApproval).await;
    tokio::time::sleep(Duration::from_millis(20)).await;
    let (status, _) = s.post(&format!("/api/sessions/{sid}/runs/{}/approve", run.run_id), json!(null)).await;
    assert_eq!(status, 200);
    let live = reader.await.unwrap();
    let stored = s.hub.run(&sid, &run.run_id).unwrap().events_after(0);
    assert_eq!(live, stored);
    assert!(live.last().unwrap().is_terminal());
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_404() {
    let s = start().await;
    let sid = s.session().await;
    for path in [
        "/api/sessions/nope".to_string(),
        format!("/api/sessions/{sid}/runs/nope"),
        format!("/api/sessions/{sid}/runs/nope/events"),
        format!("/api/sessions/{sid}/runs/nope/report"),
        "/api/suites/nope".into(),
        "/api/datasets/nope".into(),
        "/api/datasets/nope/jsonl".into(),
    ] {
        assert_eq!(s.get(&path).await.0, 404, "{path}");
    }
    let (status, _) = s.post("/api/sessions/nope/requirements", json!({ "text": TASK1 })).await;
    assert_eq!(status, 404);
    let (status, _) = s.post(&format!("/api/sessions/{sid}/runs/nope/approve"), json!({})).await;
    assert_eq!(status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_bodies_are_422() {
    let s = start().await;
    let sid = s.session().await;
    let path = format!("/api/sessions/{sid}/requirements");
    assert_eq!(s.post_raw(&path, "{not json").await.0, 422);
    assert_eq!(s.post_raw(&path, "{}").await.0, 422);
    assert_eq!(s.post(&path, json!({ "text": "  " })).await.0, 422);
    assert_eq!(s.post(&path, json!({ "text": TASK1, "auto_execute": "yes" })).await.0, 422);
    assert_eq!(s.post(&path, json!({ "text": TASK1, "backend": "oracle-9000" })).await.0, 422);
    assert_eq!(s.post("/api/datasets", json!({ "count": 0 })).await.0, 422);
    assert_eq!(s.post("/api/suites", json!({ "suite": "other" })).await.0, 422);
    assert_eq!(s.post("/api/suites", json!({ "cases": [] })).await.0, 422);
}

#[tokio::test(flavor = "multi_thread")]
async fn plan_and_backend_failures_finish_faulted() {
    let s = start().await;
    let sid = s.session().await;
    let (status, body) = s
        .post(
            &format!("/api/sessions/{sid}/requirements"),
            json!({ "text": TASK1, "auto_execute": true, "backend": "broken-planner" }),
        )
        .await;
    assert_eq!(status, 202);
    let rid = body["run_id"].as_str().unwrap().to_string();
    let events = s.events(&sid, &rid, "").await;
    assert_eq!(kinds(&events), ["plan_ready", "run_finished"]);
    let (status, report) = s.get(&format!("/api/sessions/{sid}/runs/{rid}/report")).await;
    assert_eq!(status, 200);
    assert!(report["plan_error"].is_object());
    // A rejected generated script still waits for a human fix.
    let (_, body) = s
        .post(&format!("/api/sessions/{sid}/requirements"), json!({ "text": TASK1, "backend": "broken-codegen" }))
        .await;
    let rid = body["run_id"].as_str().unwrap().to_string();
    s.wait_for(&sid, &rid, |st| st == RunState::AwaitingApproval).await;
    let (status, _) = s.post(&format!("/api/sessions/{sid}/runs/{rid}/approve"), json!({})).await;
    assert_eq!(status, 422);

    // SAFETY: no other test reads this variable.
    unsafe { std::env::set_var("EDAGENT_TEST_KEY_HTTP", "x") };
    let dead = start_with(|c| {
        c.backend.kind = edagent_core::agent::BackendKind::Remote;
        c.backend.endpoint = Some("http://127.0.0.1:9/v1".into());
        c.backend.auth_env = "EDAGENT_TEST_KEY_HTTP".into();
        c.backend.max_retries = 0;
    })
    .await;
    let sid = dead.session().await;
    let run = dead.submit(&sid, TASK1, true).await;
    let events = dead.events(&sid, &run.run_id, "").await;
    assert_eq!(kinds(&events), ["fault", "run_finished"]);
    let (status, _) = dead.get(&format!("/api/sessions/{sid}/runs/{}/report", run.run_id)).await;
    assert_eq!(status, 409);
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_survive_a_restart() {
    let s = start().await;
    let sid = s.session().await;
    let empty = s.session().await;
    let run = s.submit(&sid, TASK1, true).await;
    let events = s.events(&sid, &run.run_id, "").await;
    let report = s.hub.report(&sid, &run.run_id).unwrap();
    let config = s.hub.config.clone();
    let req_id = run.requirement_id.clone();
    let (_, keys) = s.get(&format!("/api/requirements/{req_id}/runs")).await;
    assert_eq!(keys, json!([{ "session_id": sid, "run_id": run.run_id }]));

    let reopened = serve_dir(config, s.dir).await;
    let (status, list) = reopened.get("/api/sessions").await;
    assert_eq!(status, 200);
    let ids: Vec<_> = list.as_array().unwrap().iter().map(|x| x["session_id"].as_str().unwrap().to_string()).collect();
    assert!(ids.contains(&sid) && ids.contains(&empty));
    assert_eq!(reopened.hub.report(&sid, &run.run_id).unwrap(), report);
    assert_eq!(reopened.events(&sid, &run.run_id, "").await, events);
    assert_eq!(reopened.hub.run(&sid, &run.run_id).unwrap().state(), RunState::Finished);
}

#[tokio::test(flavor = "multi_thread")]
async fn many_sessions_run_concurrently() {
    let s = start().await;
    let mut runs = Vec::new();
    for _ in 0..8 {
        let sid = s.session().await;
        for _ in 0..3 {
            runs.push((sid.clone(), s.submit(&sid, TASK1, true).await.run_id));
        }
    }
    let expected = serde_json::to_vec(&cli_report(TASK1)).unwrap();
    for (sid, rid) in runs {
        s.events(&sid, &rid, "").await;
        assert_eq!(s.get_bytes(&format!("/api/sessions/{sid}/runs/{rid}/report")).await.1, expected);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn suite_endpoints_mirror_the_cli() {
    let s = start().await;
    let (status, body) = s.post("/api/suites", json!({ "suite": "builtin" })).await;
    assert_eq!(status, 201);
    assert_eq!(body["report"]["percent"]["A"], 100.0);
    let id = body["suite_id"].as_str().unwrap();
    let (_, list) = s.get("/api/suites").await;
    assert_eq!(list[0]["suite_id"], id);
    assert_eq!(list[0]["cases"], 50);
    let (status, one) = s.get(&format!("/api/suites/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(one, body);

    let cases: Vec<_> = edagent_core::bench::builtin_suite().into_iter().take(3).collect();
    let (status, body) = s.post("/api/suites", json!({ "cases": cases, "backend": "broken-planner" })).await;
    assert_eq!(status, 201);
    assert_eq!(body["report"]["percent"]["C"], 100.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn dataset_endpoints_mirror_the_cli() {
    let s = start().await;
    let (status, info) = s.post("/api/datasets", json!({ "count": 12, "seed": 7 })).await;
    assert_eq!(status, 201);
    assert_eq!(info["validated"], 12);
    let id = info["dataset_id"].as_str().unwrap();
    let (_, page) = s.get(&format!("/api/datasets/{id}?offset=10&limit=5")).await;
    assert_eq!(page["records"].as_array().unwrap().len(), 2);
    let (status, jsonl) = s.get_bytes(&format!("/api/datasets/{id}/jsonl")).await;
    assert_eq!(status, 200);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    let mut o = Vec::new();
    let code = edagent_hub::cli::main_with(
        ["edagent", "dataset", "gen", "--count", "12", "--seed", "7", "--out", out.to_str().unwrap()],
        &mut std::io::Cursor::new(Vec::new()),
        &mut o,
        &mut Vec::new(),
    );
    assert_eq!(code, 0);
    assert_eq!(jsonl, std::fs::read(&out).unwrap());

    let (status, samples) = s.get(&format!("/api/datasets/{id}/samples?limit=3")).await;
    assert_eq!(status, 200);
    assert_eq!(samples.as_array().unwrap().len(), 3);
    let (status, _) = s.get(&format!("/api/datasets/{id}/samples?separator=")).await;
    assert_eq!(status, 422);
    let (_, list) = s.get("/api/datasets").await;
    assert_eq!(list[0]["dataset_id"], id);
}

#[tokio::test(flavor = "multi_thread")]
async fn catalog_and_health() {
    let s = start().await;
    assert_eq!(s.get("/api/health").await.1["status"], "ok");
    let (_, c) = s.get("/api/catalog").await;
    assert_eq!(c["designs"].as_array().unwrap().len(), 8);
    assert_eq!(c["platforms"].as_array().unwrap().len(), 4);
}
