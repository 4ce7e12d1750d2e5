// SPDX-License-Identifier: Apache-2.0
//! Append-only run records, one newline-delimited JSON log per session.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use edagent_core::agent::SessionReport;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::RunEvent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub session_id: String,
    pub run_id: String,
    pub requirement_id: String,
    pub requirement: String,
    pub backend: String,
    pub recorded_at_ms: u64,
    pub auto_execute: bool,
    /// Absent when the backend failed before producing one.
    pub report: Option<SessionReport>,
    pub events: Vec<RunEvent>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record ({session_id}, {run_id}) already exists")]
    Duplicate { session_id: String, run_id: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid id `{0}`")]
    InvalidId(String),
    #[error("corrupt record in {file} line {line}")]
    Corrupt { file: PathBuf, line: usize },
    #[error("store i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Default)]
struct Index {
    /// Session id → creation time and records in append order.
    sessions: HashMap<String, (u64, Vec<StoredRun>)>,
    by_requirement: HashMap<String, Vec<(String, String)>>,
}

pub struct SessionRecordStore {
    dir: PathBuf,
    index: Mutex<Index>,
}

/// Ids become file names, so only a conservative alphabet is allowed.
fn check_id(id: &str) -> Result<(), StoreError> {
    if id.is_empty() || id.len() > 64 || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(StoreError::InvalidId(id.into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Session { session_id: String, created_at_ms: u64 },
    Run(Box<StoredRun>),
}

impl SessionRecordStore {
    /// Opens `dir`, creating it if needed, and indexes every existing log.
    pub fn open(dir: impl AsRef<Path>) -> Result<SessionRecordStore, StoreError> {
        let dir = dir.as_ref().join("sessions");
        std::fs::create_dir_all(&dir)?;
        let mut index = Index::default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        files.sort();
        for file in files {
            for (n, line) in BufReader::new(File::open(&file)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = || StoreError::Corrupt { file: file.clone(), line: n + 1 };
                match serde_json::from_str::<Line>(&line).map_err(|_| corrupt())? {
                    Line::Session { session_id, created_at_ms } => {
                        index.sessions.entry(session_id).or_insert((created_at_ms, Vec::new()));
                    }
                    Line::Run(run) => {
                        let entry = index.sessions.get_mut(&run.session_id).ok_or_else(corrupt)?;
                        index
                            .by_requirement
                            .entry(run.requirement_id.clone())
                            .or_default()
                            .push((run.session_id.clone(), run.run_id.clone()));
                        entry.1.push(*run);
                    }
                }
            }
        }
        Ok(SessionRecordStore { dir, index: Mutex::new(index) })
    }

    fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.ndjson"))
    }

    fn append_line(&self, session_id: &str, line: &Line) -> Result<(), StoreError> {
        let mut text = serde_json::to_string(line).expect("records serialize");
        text.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(session_id))?;
        f.write_all(text.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn create_session(&self, session_id: &str, created_at_ms: u64) -> Result<(), StoreError> {
        check_id(session_id)?;
        let mut index = self.index.lock().expect("store lock");
        if index.sessions.contains_key(session_id) {
            return Err(StoreError::Duplicate { session_id: session_id.into(), run_id: String::new() });
        }
        self.append_line(session_id, &Line::Session { session_id: session_id.into(), created_at_ms })?;
        index.sessions.insert(session_id.into(), (created_at_ms, Vec::new()));
        Ok(())
    }

    /// Appends a finished run. A key can be written once.
    pub fn append(&self, run: StoredRun) -> Result<(), StoreError> {
        check_id(&run.run_id)?;
        let mut index = self.index.lock().expect("store lock");
        let Some((_, runs)) = index.sessions.get(&run.session_id) else {
            return Err(StoreError::UnknownSession(run.session_id));
        };
        if runs.iter().any(|r| r.run_id == run.run_id) {
            return Err(StoreError::Duplicate { session_id: run.session_id, run_id: run.run_id });
        }
        self.append_line(&run.session_id, &Line::Run(Box::new(run.clone())))?;
        index
            .by_requirement
            .entry(run.requirement_id.clone())
            .or_default()
            .push((run.session_id.clone(), run.run_id.clone()));
        index.sessions.get_mut(&run.session_id).expect("checked").1.push(run);
        Ok(())
    }

    pub fn get(&self, session_id: &str, run_id: &str) -> Option<StoredRun> {
        let index = self.index.lock().expect("store lock");
        index.sessions.get(session_id)?.1.iter().find(|r| r.run_id == run_id).cloned()
    }

    /// Sessions with their creation time, oldest first.
    pub fn sessions(&self) -> Vec<(String, u64)> {
        let index = self.index.lock().expect("store lock");
        let mut out: Vec<_> = index.sessions.iter().map(|(id, (t, _))| (id.clone(), *t)).collect();
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// A session's records in append order.
    pub fn runs(&self, session_id: &str) -> Option<Vec<StoredRun>> {
        let index = self.index.lock().expect("store lock");
        index.sessions.get(session_id).map(|(_, runs)| runs.clone())
    }

    /// `(session, run)` keys of every record for one requirement id.
    pub fn by_requirement(&self, requirement_id: &str) -> Vec<(String, String)> {
        let index = self.index.lock().expect("store lock");
        index.by_requirement.get(requirement_id).cloned().unwrap_or_default()
    }
}
