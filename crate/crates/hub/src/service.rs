// SPDX-License-Identifier: Apache-2.0
//! Sessions, runs and their state machine, independent of the transport.
//!
//! Planning and code generation run on a blocking worker. With
//! `auto_execute = false` the run parks as a [`PreparedRun`] until approved;
//! no flow session exists while it waits.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use edagent_core::agent::{
    execute, prepare_with, AgentError, Backend, BackendConfig, BackendKind, PreparedRun, Requirement, SessionReport,
};
use edagent_core::bench::{
    builtin_suite, generate_instructions, render_training_sample, run_suite_with, validate_suite, write_jsonl,
    BenchError, DistributionReport, EvalCase, InstructionRecord, TrainingSample,
};
use edagent_core::flowsim::StageId;
use edagent_core::miniscript::{
    parse, CallSummary, FlowObserver, HostEnv, RuntimeLimits, SyntaxError, TraceArg, TraceEntry,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::watch;

use crate::config::HubConfig;
use crate::events::{now_ms, EventBody, FaultInfo, RunEvent, RunState};
use crate::store::{SessionRecordStore, StoreError, StoredRun};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{message}")]
    Unprocessable { message: String, syntax: Option<SyntaxError> },
    #[error("{0}")]
    Infrastructure(String),
}

impl HubError {
    fn invalid(message: impl Into<String>) -> HubError {
        HubError::Unprocessable { message: message.into(), syntax: None }
    }
}

impl From<StoreError> for HubError {
    fn from(e: StoreError) -> Self {
        HubError::Infrastructure(e.to_string())
    }
}

impl From<BenchError> for HubError {
    fn from(e: BenchError) -> Self {
        if e.is_infrastructure() {
            HubError::Infrastructure(e.to_string())
        } else {
            HubError::invalid(e.to_string())
        }
    }
}

/// Parses a backend name; `None` keeps the configured backend.
pub fn backend_config(base: &BackendConfig, name: Option<&str>) -> Result<BackendConfig, HubError> {
    let mut config = base.clone();
    if let Some(name) = name {
        config.kind = BackendKind::parse(name).ok_or_else(|| HubError::invalid(format!("unknown backend `{name}`")))?;
    }
    config.validate().map_err(|e| HubError::invalid(e.to_string()))?;
    Ok(config)
}

fn build_backend(config: &BackendConfig) -> Result<Box<dyn Backend>, AgentError> {
    config.build()
}

struct RunInner {
    state: RunState,
    events: Vec<RunEvent>,
    prepared: Option<PreparedRun>,
    report: Option<SessionReport>,
}

pub struct Run {
    pub id: String,
    pub session_id: String,
    pub requirement: Requirement,
    pub auto_execute: bool,
    pub backend: String,
    pub created_at_ms: u64,
    inner: Mutex<RunInner>,
    count: watch::Sender<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub session_id: String,
    pub requirement_id: String,
    pub requirement: String,
    pub backend: String,
    pub auto_execute: bool,
    pub state: RunState,
    pub created_at_ms: u64,
    pub events: usize,
    /// The script awaiting approval, when paused.
    pub pending_script: Option<String>,
}

impl Run {
    fn emit(&self, body: EventBody) {
        let mut inner = self.inner.lock().expect("run lock");
        let seq = inner.events.len() as u64 + 1;
        inner.events.push(RunEvent { seq, timestamp_ms: now_ms(), body });
        let n = inner.events.len();
        drop(inner);
        self.count.send_replace(n);
    }

    fn set_state(&self, state: RunState) {
        self.inner.lock().expect("run lock").state = state;
    }

    pub fn state(&self) -> RunState {
        self.inner.lock().expect("run lock").state
    }

    pub fn info(&self) -> RunInfo {
        let inner = self.inner.lock().expect("run lock");
        RunInfo {
            run_id: self.id.clone(),
            session_id: self.session_id.clone(),
            requirement_id: self.requirement.id.clone(),
            requirement: self.requirement.text.clone(),
            backend: self.backend.clone(),
            auto_execute: self.auto_execute,
            state: inner.state,
            created_at_ms: self.created_at_ms,
            events: inner.events.len(),
            pending_script: inner.prepared.as_ref().and_then(|p| p.report.script.clone()),
        }
    }

    /// Events with `seq > after`.
    pub fn events_after(&self, after: u64) -> Vec<RunEvent> {
        let inner = self.inner.lock().expect("run lock");
        inner.events.iter().filter(|e| e.seq > after).cloned().collect()
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.count.subscribe()
    }

    pub fn report(&self) -> Option<SessionReport> {
        self.inner.lock().expect("run lock").report.clone()
    }

    fn stored(&self) -> StoredRun {
        let inner = self.inner.lock().expect("run lock");
        StoredRun {
            session_id: self.session_id.clone(),
            run_id: self.id.clone(),
            requirement_id: self.requirement.id.clone(),
            requirement: self.requirement.text.clone(),
            backend: self.backend.clone(),
            recorded_at_ms: now_ms(),
            auto_execute: self.auto_execute,
            report: inner.report.clone(),
            events: inner.events.clone(),
        }
    }

    fn from_stored(record: StoredRun) -> Run {
        let requirement = Requirement::new(record.requirement.clone()).expect("stored requirements are non-empty");
        let state = match record.events.last().map(|e| &e.body) {
            Some(EventBody::RunFinished { state, .. }) => *state,
            _ => RunState::Faulted,
        };
        let n = record.events.len();
        Run {
            id: record.run_id,
            session_id: record.session_id,
            requirement,
            auto_execute: record.auto_execute,
            backend: record.backend,
            created_at_ms: record.events.first().map(|e| e.timestamp_ms).unwrap_or(record.recorded_at_ms),
            inner: Mutex::new(RunInner { state, events: record.events, prepared: None, report: record.report }),
            count: watch::Sender::new(n),
        }
    }
}

/// Streams flow activity of one execution as events.
struct EventObserver<'a> {
    run: &'a Run,
}

impl FlowObserver for EventObserver<'_> {
    fn call_started(&mut self, handle: u32, api: &str, args: &BTreeMap<String, TraceArg>) {
        // Setup yields no metrics, so it only surfaces as an api_call.
        if let Some(stage) = StageId::from_api_name(api).filter(|s| *s != StageId::Setup) {
            self.run.emit(EventBody::StageStarted { handle, stage, args: args.clone() });
        }
    }

    fn call_finished(&mut self, entry: &TraceEntry) {
        self.run.emit(EventBody::ApiCall { entry: entry.clone() });
        if let CallSummary::Stage { stage, metrics } = &entry.result {
            self.run.emit(EventBody::StageFinished { handle: entry.handle, stage: *stage, metrics: *metrics });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub created_at_ms: u64,
    pub runs: Vec<RunInfo>,
}

struct Session {
    created_at_ms: u64,
    runs: Vec<Arc<Run>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub suite_id: String,
    pub created_at_ms: u64,
    pub report: DistributionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub created_at_ms: u64,
    pub backend: String,
    pub seed: u64,
    pub count: usize,
    pub validated: usize,
}

pub const MAX_DATASET_COUNT: usize = 100_000;

/// Everything the transports share.
pub struct Hub {
    pub config: HubConfig,
    pub env: HostEnv,
    pub limits: RuntimeLimits,
    store: SessionRecordStore,
    sessions: RwLock<HashMap<String, Session>>,
    suites: RwLock<Vec<SuiteRecord>>,
    datasets: RwLock<Vec<(DatasetInfo, Arc<Vec<InstructionRecord>>)>>,
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

impl Hub {
    /// Opens the data directory and reloads persisted sessions, suite
    /// reports and datasets.
    pub fn open(config: HubConfig) -> Result<Hub, HubError> {
        let store = SessionRecordStore::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        for (id, created_at_ms) in store.sessions() {
            let runs = store
                .runs(&id)
                .unwrap_or_default()
                .into_iter()
                .filter(|r| !r.requirement.trim().is_empty())
                .map(|r| Arc::new(Run::from_stored(r)))
                .collect();
            sessions.insert(id, Session { created_at_ms, runs });
        }
        let hub = Hub {
            env: HostEnv::default(),
            limits: RuntimeLimits::default(),
            store,
            sessions: RwLock::new(sessions),
            suites: RwLock::new(Vec::new()),
            datasets: RwLock::new(Vec::new()),
            config,
        };
        hub.reload_artifacts()?;
        Ok(hub)
    }

    fn suites_dir(&self) -> PathBuf {
        self.config.data_dir.join("suites")
    }

    fn datasets_dir(&self) -> PathBuf {
        self.config.data_dir.join("datasets")
    }

    fn reload_artifacts(&self) -> Result<(), HubError> {
        let read_dir = |dir: PathBuf, ext: &str| -> Result<Vec<PathBuf>, HubError> {
            std::fs::create_dir_all(&dir).map_err(|e| HubError::Infrastructure(e.to_string()))?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| HubError::Infrastructure(e.to_string()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(ext))
                .collect();
            files.sort();
            Ok(files)
        };
        let mut suites = Vec::new();
        for f in read_dir(self.suites_dir(), ".json")? {
            if let Ok(record) =
                std::fs::read(&f).map_err(|_| ()).and_then(|b| serde_json::from_slice(&b).map_err(|_| ()))
            {
                suites.push(record);
            }
        }
        suites.sort_by_key(|s: &SuiteRecord| s.created_at_ms);
        *self.suites.write().expect("lock") = suites;
        let mut datasets = Vec::new();
        for f in read_dir(self.datasets_dir(), ".meta.json")? {
            let Ok(info) = std::fs::read(&f)
                .map_err(|_| ())
                .and_then(|b| serde_json::from_slice::<DatasetInfo>(&b).map_err(|_| ()))
            else {
                continue;
            };
            let data = self.datasets_dir().join(format!("{}.jsonl", info.dataset_id));
            if let Ok(records) = edagent_core::bench::import_jsonl(&data) {
                datasets.push((info, Arc::new(records)));
            }
        }
        datasets.sort_by_key(|(i, _)| i.created_at_ms);
        *self.datasets.write().expect("lock") = datasets;
        Ok(())
    }

    pub fn create_session(&self) -> Result<SessionInfo, HubError> {
        let id = new_id("s");
        let created_at_ms = now_ms();
        self.store.create_session(&id, created_at_ms)?;
        self.sessions.write().expect("lock").insert(id.clone(), Session { created_at_ms, runs: Vec::new() });
        Ok(SessionInfo { session_id: id, created_at_ms, runs: Vec::new() })
    }

    pub fn sessions(&self) -> Vec<SessionInfo> {
        let sessions = self.sessions.read().expect("lock");
        let mut out: Vec<SessionInfo> = sessions
            .iter()
            .map(|(id, s)| SessionInfo {
                session_id: id.clone(),
                created_at_ms: s.created_at_ms,
                runs: s.runs.iter().map(|r| r.info()).collect(),
            })
            .collect();
        out.sort_by(|a, b| a.created_at_ms.cmp(&b.created_at_ms).then_with(|| a.session_id.cmp(&b.session_id)));
        out
    }

    pub fn session(&self, id: &str) -> Result<SessionInfo, HubError> {
        let sessions = self.sessions.read().expect("lock");
        let s = sessions.get(id).ok_or_else(|| HubError::NotFound(format!("session `{id}`")))?;
        Ok(SessionInfo {
            session_id: id.into(),
            created_at_ms: s.created_at_ms,
            runs: s.runs.iter().map(|r| r.info()).collect(),
        })
    }

    pub fn run(&self, session_id: &str, run_id: &str) -> Result<Arc<Run>, HubError> {
        let sessions = self.sessions.read().expect("lock");
        let s = sessions.get(session_id).ok_or_else(|| HubError::NotFound(format!("session `{session_id}`")))?;
        s.runs.iter().find(|r| r.id == run_id).cloned().ok_or_else(|| HubError::NotFound(format!("run `{run_id}`")))
    }

    /// Starts planning on a worker thread and returns at once.
    pub fn submit(
        self: &Arc<Self>,
        session_id: &str,
        text: &str,
        auto_execute: bool,
        backend: Option<&str>,
    ) -> Result<RunInfo, HubError> {
        let config = backend_config(&self.config.backend, backend)?;
        let requirement = Requirement::new(text).map_err(|e| HubError::invalid(e.to_string()))?;
        let run = Arc::new(Run {
            id: new_id("r"),
            session_id: session_id.into(),
            requirement,
            auto_execute,
            backend: config_name(&config),
            created_at_ms: now_ms(),
            inner: Mutex::new(RunInner { state: RunState::Planning, events: Vec::new(), prepared: None, report: None }),
            count: watch::Sender::new(0),
        });
        {
            let mut sessions = self.sessions.write().expect("lock");
            let s =
                sessions.get_mut(session_id).ok_or_else(|| HubError::NotFound(format!("session `{session_id}`")))?;
            s.runs.push(run.clone());
        }
        let info = run.info();
        let hub = self.clone();
        tokio::task::spawn_blocking(move || hub.drive(&run, config));
        Ok(info)
    }

    fn drive(&self, run: &Run, config: BackendConfig) {
        let prepared = build_backend(&config).and_then(|backend| {
            prepare_with(&run.requirement, backend.as_ref(), self.config.plan_retries, &mut |report| {
                run.emit(EventBody::PlanReady { plan: report.plan.clone(), error: report.plan_error.clone() });
                if report.plan_error.is_none() {
                    run.set_state(RunState::Scripting);
                }
            })
        });
        let prepared = match prepared {
            Ok(p) => p,
            Err(e) => {
                run.emit(EventBody::Fault(FaultInfo::Backend { message: e.to_string() }));
                self.finish(run, RunState::Faulted);
                return;
            }
        };
        if prepared.report.plan_error.is_some() {
            run.inner.lock().expect("run lock").report = Some(prepared.report);
            self.finish(run, RunState::Faulted);
            return;
        }
        let report = &prepared.report;
        // A human can still repair a rejected script, so it waits too.
        let waits = !run.auto_execute;
        run.emit(EventBody::ScriptReady {
            script: report.script.clone(),
            error: report.script_error.clone(),
            awaiting_approval: waits,
        });
        if waits {
            let mut inner = run.inner.lock().expect("run lock");
            inner.prepared = Some(prepared);
            inner.state = RunState::AwaitingApproval;
            return;
        }
        self.execute_prepared(run, prepared, None);
    }

    fn execute_prepared(&self, run: &Run, prepared: PreparedRun, replacement: Option<String>) {
        run.set_state(RunState::Executing);
        let report = execute(prepared, replacement, &self.env, &self.limits, &mut EventObserver { run });
        for fault in &report.faults {
            run.emit(EventBody::Fault(FaultInfo::Runtime { fault: fault.clone() }));
        }
        let clean = report.executed && report.faults.is_empty();
        run.inner.lock().expect("run lock").report = Some(report);
        self.finish(run, if clean { RunState::Finished } else { RunState::Faulted });
    }

    fn finish(&self, run: &Run, state: RunState) {
        let (metrics, output) = {
            let inner = run.inner.lock().expect("run lock");
            let r = inner.report.as_ref();
            (r.and_then(|r| r.metrics), r.map(|r| r.output.clone()).unwrap_or_default())
        };
        run.set_state(state);
        run.emit(EventBody::RunFinished { state, metrics, output });
        if let Err(e) = self.store.append(run.stored()) {
            tracing::error!(run = %run.id, "failed to persist run: {e}");
        }
    }

    /// Releases a paused run, optionally with an edited script. An edit that
    /// does not parse leaves the run paused.
    pub fn approve(
        self: &Arc<Self>,
        session_id: &str,
        run_id: &str,
        script: Option<String>,
    ) -> Result<RunInfo, HubError> {
        let run = self.run(session_id, run_id)?;
        let prepared = {
            let mut inner = run.inner.lock().expect("run lock");
            if inner.state != RunState::AwaitingApproval {
                return Err(HubError::Conflict(format!("run `{run_id}` is {:?}, not awaiting approval", inner.state)));
            }
            let pending = inner.prepared.as_ref().expect("paused runs hold their preparation");
            match &script {
                Some(s) => {
                    if let Err(e) = parse(s) {
                        return Err(HubError::Unprocessable {
                            message: format!("edited script does not parse: {e}"),
                            syntax: Some(e),
                        });
                    }
                }
                None if pending.report.script_error.is_some() => {
                    return Err(HubError::invalid("the generated script was rejected; approve with an edited script"));
                }
                None => {}
            }
            inner.state = RunState::Executing;
            inner.prepared.take().expect("checked")
        };
        let info = run.info();
        let hub = self.clone();
        tokio::task::spawn_blocking(move || hub.execute_prepared(&run, prepared, script));
        Ok(info)
    }

    pub fn report(&self, session_id: &str, run_id: &str) -> Result<SessionReport, HubError> {
        let run = self.run(session_id, run_id)?;
        if !run.state().is_terminal() {
            return Err(HubError::Conflict(format!("run `{run_id}` has not finished")));
        }
        run.report().ok_or_else(|| HubError::Conflict(format!("run `{run_id}` failed before producing a report")))
    }

    pub fn records_for_requirement(&self, requirement_id: &str) -> Vec<(String, String)> {
        self.store.by_requirement(requirement_id)
    }

    /// Grades a suite on a worker thread; the caller awaits the result.
    pub fn run_suite(&self, cases: Option<Vec<EvalCase>>, backend: Option<&str>) -> Result<SuiteRecord, HubError> {
        let cases = cases.unwrap_or_else(builtin_suite);
        validate_suite(&cases)?;
        let config = backend_config(&self.config.backend, backend)?;
        let backend = build_backend(&config).map_err(|e| HubError::Infrastructure(e.to_string()))?;
        let report = run_suite_with(&cases, backend.as_ref(), &self.env, &self.limits)?;
        let record = SuiteRecord { suite_id: new_id("suite"), created_at_ms: now_ms(), report };
        let path = self.suites_dir().join(format!("{}.json", record.suite_id));
        std::fs::write(&path, serde_json::to_vec(&record).expect("serializes"))
            .map_err(|e| HubError::Infrastructure(e.to_string()))?;
        self.suites.write().expect("lock").push(record.clone());
        Ok(record)
    }

    pub fn suites(&self) -> Vec<SuiteRecord> {
        self.suites.read().expect("lock").clone()
    }

    pub fn suite(&self, id: &str) -> Result<SuiteRecord, HubError> {
        self.suites()
            .into_iter()
            .find(|s| s.suite_id == id)
            .ok_or_else(|| HubError::NotFound(format!("suite run `{id}`")))
    }

    pub fn generate_dataset(&self, count: usize, seed: u64, backend: Option<&str>) -> Result<DatasetInfo, HubError> {
        if count == 0 || count > MAX_DATASET_COUNT {
            return Err(HubError::invalid(format!("count must be in 1..={MAX_DATASET_COUNT}")));
        }
        let config = backend_config(&self.config.backend, backend)?;
        let backend = build_backend(&config).map_err(|e| HubError::Infrastructure(e.to_string()))?;
        let records = generate_instructions(count, backend.as_ref(), seed, &self.env, &self.limits)?;
        let info = DatasetInfo {
            dataset_id: new_id("ds"),
            created_at_ms: now_ms(),
            backend: backend.name().to_string(),
            seed,
            count,
            validated: records.iter().filter(|r| r.validated).count(),
        };
        let io = |e: std::io::Error| HubError::Infrastructure(e.to_string());
        let dir = self.datasets_dir();
        let file = std::fs::File::create(dir.join(format!("{}.jsonl", info.dataset_id))).map_err(io)?;
        write_jsonl(&records, file)?;
        std::fs::write(
            dir.join(format!("{}.meta.json", info.dataset_id)),
            serde_json::to_vec(&info).expect("serializes"),
        )
        .map_err(io)?;
        self.datasets.write().expect("lock").push((info.clone(), Arc::new(records)));
        Ok(info)
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.datasets.read().expect("lock").iter().map(|(i, _)| i.clone()).collect()
    }

    pub fn dataset(&self, id: &str) -> Result<(DatasetInfo, Arc<Vec<InstructionRecord>>), HubError> {
        self.datasets
            .read()
            .expect("lock")
            .iter()
            .find(|(i, _)| i.dataset_id == id)
            .cloned()
            .ok_or_else(|| HubError::NotFound(format!("dataset `{id}`")))
    }

    /// Training samples for the validated records in `[offset, offset+limit)`.
    pub fn dataset_samples(
        &self,
        id: &str,
        separator: &str,
        offset: usize,
        limit: usize,
    ) -> Result<Vec<TrainingSample>, HubError> {
        let (_, records) = self.dataset(id)?;
        records
            .iter()
            .skip(offset)
            .take(limit)
            .filter(|r| r.validated)
            .map(|r| render_training_sample(r, separator).map_err(HubError::from))
            .collect()
    }
}

fn config_name(config: &BackendConfig) -> String {
    match config.kind {
        BackendKind::Remote => "remote",
        BackendKind::RuleBased => "rule_based",
        BackendKind::RuleBrokenCodegen => "rule_broken_codegen",
        BackendKind::RuleBrokenPlanner => "rule_broken_planner",
    }
    .to_string()
}
