// SPDX-License-Identifier: Apache-2.0
//! Loader for the golden task files: API sequences stored as repeated
//! segments, expanded before comparison.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Segment {
    pub repeat: usize,
    pub calls: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct Golden {
    pub requirement: String,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub final_metrics: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub output: Option<String>,
}

impl Golden {
    pub fn sequence(&self) -> Vec<String> {
        self.segments.iter().flat_map(|s| std::iter::repeat_n(&s.calls, s.repeat).flatten().cloned()).collect()
    }
}

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

pub fn load(name: &str) -> Golden {
    let path = dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub const TASKS: [&str; 5] = ["task1", "task2", "task3", "task4", "task5"];
