// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::future::IntoFuture;
use std::sync::Arc;
use std::time::Duration;

use edagent_hub::{Hub, HubConfig, RunEvent, RunInfo, RunState};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub hub: Arc<Hub>,
    pub client: reqwest::Client,
    pub dir: tempfile::TempDir,
}

pub async fn start() -> Server {
    start_with(|_| {}).await
}

pub async fn start_with(edit: impl FnOnce(&mut HubConfig)) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let mut config = HubConfig { data_dir: dir.path().to_path_buf(), ..HubConfig::default() };
    edit(&mut config);
    serve_dir(config, dir).await
}

pub async fn serve_dir(config: HubConfig, dir: tempfile::TempDir) -> Server {
    let hub = Arc::new(Hub::open(config).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(axum::serve(listener, edagent_hub::http::router(hub.clone())).into_future());
    Server { base: format!("http://{addr}"), hub, client: reqwest::Client::new(), dir }
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, Value) {
        let r = self
            .client
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
    }

    pub async fn session(&self) -> String {
        let (status, body) = self.post("/api/sessions", json!({})).await;
        assert_eq!(status, 201);
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn submit(&self, sid: &str, text: &str, auto_execute: bool) -> RunInfo {
        let (status, body) = self
            .post(&format!("/api/sessions/{sid}/requirements"), json!({ "text": text, "auto_execute": auto_execute }))
            .await;
        assert_eq!(status, 202, "{body}");
        serde_json::from_value(body).unwrap()
    }

    pub async fn wait_for(&self, sid: &str, rid: &str, want: impl Fn(RunState) -> bool) -> RunInfo {
        for _ in 0..2000 {
            let (_, body) = self.get(&format!("/api/sessions/{sid}/runs/{rid}")).await;
            let info: RunInfo = serde_json::from_value(body).unwrap();
            if want(info.state) {
                return info;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("run {rid} never reached the wanted state");
    }

    /// Reads the event stream to its end.
    pub async fn events(&self, sid: &str, rid: &str, query: &str) -> Vec<RunEvent> {
        let text = self
            .client
            .get(self.url(&format!("/api/sessions/{sid}/runs/{rid}/events{query}")))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        parse_sse(&text)
    }
}

pub fn parse_sse(text: &str) -> Vec<RunEvent> {
    text.lines()
        .filter_map(|l| l.strip_prefix("data: ").or_else(|| l.strip_prefix("data:")))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect()
}

pub const TASK1: &str = "I want to test the area and power performance of the design \"leo\" on \"sky130\" setting core utilization is 60%. I need to perform cts, routing, placement, and so on.";
