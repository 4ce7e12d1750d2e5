// SPDX-License-Identifier: Apache-2.0
//! JSON API and server-sent run events.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use edagent_core::bench::{EvalCase, DEFAULT_SEPARATOR};
use edagent_core::flowsim::Catalog;
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::events::RunEvent;
use crate::service::{Hub, HubError, Run};

type ApiResult<T> = Result<T, HubError>;

impl IntoResponse for HubError {
    fn into_response(self) -> Response {
        let status = match &self {
            HubError::NotFound(_) => StatusCode::NOT_FOUND,
            HubError::Conflict(_) => StatusCode::CONFLICT,
            HubError::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            HubError::Infrastructure(_) => StatusCode::BAD_GATEWAY,
        };
        let mut body = json!({ "error": self.to_string() });
        if let HubError::Unprocessable { syntax: Some(s), .. } = &self {
            body["syntax"] = serde_json::to_value(s).expect("serializes");
        }
        (status, Json(body)).into_response()
    }
}

/// Any body that is not the expected JSON is a 422. An empty body reads as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] =
        if bytes.iter().all(u8::is_ascii_whitespace) || bytes.trim_ascii() == b"null" { b"{}" } else { bytes };
    serde_json::from_slice(bytes)
        .map_err(|e| HubError::Unprocessable { message: format!("malformed body: {e}"), syntax: None })
}

/// Runs blocking hub work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| HubError::Infrastructure(e.to_string()))?
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/api/catalog", get(catalog))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{sid}", get(get_session))
        .route("/api/sessions/{sid}/requirements", post(submit))
        .route("/api/sessions/{sid}/runs/{rid}", get(get_run))
        .route("/api/sessions/{sid}/runs/{rid}/approve", post(approve))
        .route("/api/sessions/{sid}/runs/{rid}/events", get(events))
        .route("/api/sessions/{sid}/runs/{rid}/report", get(report))
        .route("/api/requirements/{req_id}/runs", get(runs_for_requirement))
        .route("/api/suites", post(run_suite).get(list_suites))
        .route("/api/suites/{id}", get(get_suite))
        .route("/api/datasets", post(gen_dataset).get(list_datasets))
        .route("/api/datasets/{id}", get(get_dataset))
        .route("/api/datasets/{id}/jsonl", get(dataset_jsonl))
        .route("/api/datasets/{id}/samples", get(dataset_samples))
        .with_state(hub)
}

async fn catalog(State(hub): State<Arc<Hub>>) -> Json<serde_json::Value> {
    let c: &Catalog = &hub.env.catalog;
    Json(json!({
        "designs": c.designs().collect::<Vec<_>>(),
        "platforms": c.platforms().collect::<Vec<_>>(),
    }))
}

async fn create_session(State(hub): State<Arc<Hub>>) -> ApiResult<impl IntoResponse> {
    let info = blocking(move || hub.create_session()).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_sessions(State(hub): State<Arc<Hub>>) -> impl IntoResponse {
    Json(hub.sessions())
}

async fn get_session(State(hub): State<Arc<Hub>>, Path(sid): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.session(&sid)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    text: String,
    #[serde(default)]
    auto_execute: bool,
    backend: Option<String>,
}

async fn submit(State(hub): State<Arc<Hub>>, Path(sid): Path<String>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let b: SubmitBody = body(&bytes)?;
    let info = hub.submit(&sid, &b.text, b.auto_execute, b.backend.as_deref())?;
    Ok((StatusCode::ACCEPTED, Json(info)))
}

async fn get_run(
    State(hub): State<Arc<Hub>>,
    Path((sid, rid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.run(&sid, &rid)?.info()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproveBody {
    script: Option<String>,
}

async fn approve(
    State(hub): State<Arc<Hub>>,
    Path((sid, rid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    hub.run(&sid, &rid)?;
    let b: ApproveBody = body(&bytes)?;
    Ok(Json(hub.approve(&sid, &rid, b.script)?))
}

async fn report(State(hub): State<Arc<Hub>>, Path((sid, rid)): Path<(String, String)>) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.report(&sid, &rid)?))
}

async fn runs_for_requirement(State(hub): State<Arc<Hub>>, Path(req_id): Path<String>) -> impl IntoResponse {
    let keys: Vec<_> = hub
        .records_for_requirement(&req_id)
        .into_iter()
        .map(|(s, r)| json!({ "session_id": s, "run_id": r }))
        .collect();
    Json(keys)
}

#[derive(Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

fn sse_event(e: &RunEvent) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event(e.body.kind())
        .data(serde_json::to_string(e).expect("events serialize"))
}

/// Replays events after the cursor, then follows the run until
/// `run_finished`. The cursor is `?after=` or the `Last-Event-ID` header.
fn event_stream(run: Arc<Run>, after: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = run.subscribe();
    stream::unfold((run, rx, after, false), |(run, mut rx, cursor, done)| async move {
        if done {
            return None;
        }
        loop {
            // Mark the current count seen before reading, so no send is missed.
            rx.borrow_and_update();
            let batch = run.events_after(cursor);
            if !batch.is_empty() {
                let next = batch.last().expect("nonempty").seq;
                let finished = batch.iter().any(RunEvent::is_terminal);
                let events: Vec<_> = batch.iter().map(|e| Ok(sse_event(e))).collect();
                return Some((stream::iter(events), (run, rx, next, finished)));
            }
            if run.state().is_terminal() || rx.changed().await.is_err() {
                return None;
            }
        }
    })
    .flatten()
}

async fn events(
    State(hub): State<Arc<Hub>>,
    Path((sid, rid)): Path<(String, String)>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let run = hub.run(&sid, &rid)?;
    let last_id = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse::<u64>().ok());
    let after = q.after.or(last_id).unwrap_or(0);
    Ok(Sse::new(event_stream(run, after)).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteBody {
    /// `"builtin"`, or omitted when `cases` is given.
    suite: Option<String>,
    cases: Option<Vec<EvalCase>>,
    backend: Option<String>,
}

async fn run_suite(State(hub): State<Arc<Hub>>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let b: SuiteBody = body(&bytes)?;
    let cases = match (b.suite.as_deref(), b.cases) {
        (Some("builtin") | None, None) => None,
        (None, Some(cases)) => Some(cases),
        (Some(other), None) => {
            return Err(HubError::Unprocessable { message: format!("unknown suite `{other}`"), syntax: None })
        }
        (Some(_), Some(_)) => {
            return Err(HubError::Unprocessable { message: "give either `suite` or `cases`".into(), syntax: None })
        }
    };
    let record = blocking(move || hub.run_suite(cases, b.backend.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_suites(State(hub): State<Arc<Hub>>) -> impl IntoResponse {
    let list: Vec<_> = hub
        .suites()
        .into_iter()
        .map(|s| {
            json!({
                "suite_id": s.suite_id,
                "created_at_ms": s.created_at_ms,
                "backend": s.report.backend,
                "cases": s.report.per_case.len(),
                "percent": s.report.percent,
            })
        })
        .collect();
    Json(list)
}

async fn get_suite(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.suite(&id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetBody {
    count: usize,
    #[serde(default)]
    seed: u64,
    backend: Option<String>,
}

async fn gen_dataset(State(hub): State<Arc<Hub>>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let b: DatasetBody = body(&bytes)?;
    let info = blocking(move || hub.generate_dataset(b.count, b.seed, b.backend.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_datasets(State(hub): State<Arc<Hub>>) -> impl IntoResponse {
    Json(hub.datasets())
}

#[derive(Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
    separator: Option<String>,
}

const DEFAULT_PAGE: usize = 50;

async fn get_dataset(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    Query(page): Query<Page>,
) -> ApiResult<impl IntoResponse> {
    let (info, records) = hub.dataset(&id)?;
    let slice: Vec<_> = records.iter().skip(page.offset).take(page.limit.unwrap_or(DEFAULT_PAGE)).collect();
    Ok(Json(json!({ "info": info, "offset": page.offset, "records": slice })))
}

async fn dataset_jsonl(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let (_, records) = hub.dataset(&id)?;
    let mut out = Vec::new();
    edagent_core::bench::write_jsonl(&records, &mut out)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson; charset=utf-8")], out))
}

async fn dataset_samples(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    Query(page): Query<Page>,
) -> ApiResult<impl IntoResponse> {
    let separator = page.separator.as_deref().unwrap_or(DEFAULT_SEPARATOR);
    let samples = hub.dataset_samples(&id, separator, page.offset, page.limit.unwrap_or(DEFAULT_PAGE))?;
    Ok(Json(samples))
}

/// Binds and serves until the process exits.
pub async fn serve(hub: Arc<Hub>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(hub)).await
}
