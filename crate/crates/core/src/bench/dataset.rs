// SPDX-License-Identifier: Apache-2.0
//! Self-instruct records: generation, validation, JSONL storage and
//! loss-masked training samples.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grade::Category;
use super::suite::bounded_requirement;
use super::BenchError;
use crate::agent::{fenced_block, prepare, Backend, Plan, Requirement};
use crate::flowsim::Catalog;
use crate::miniscript::{interpret, parse, HostEnv, RuntimeLimits};

pub const DEFAULT_COUNT: usize = 1500;
pub const DEFAULT_SEPARATOR: &str = "### RESPONSE ###";
const PLAN_RETRIES: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Generated,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub requirement: String,
    /// The plan as a fenced `plan` block.
    pub plan: String,
    pub script: String,
    pub validated: bool,
    pub origin: Origin,
}

/// Checks that the plan is valid, the script runs without fault, and every
/// planned stage shows up in the trace in plan order.
pub fn validate_record(record: &InstructionRecord, env: &HostEnv, limits: &RuntimeLimits) -> Result<(), String> {
    let plan = Plan::from_reply(&record.plan).map_err(|e| format!("plan line {}: {}", e.line, e.message))?;
    plan.validate().map_err(|v| format!("invalid plan: {v}"))?;
    let program = parse(&record.script).map_err(|e| format!("script: {e}"))?;
    let ex = interpret(&program, env, limits);
    if let Some(f) = ex.fault {
        return Err(format!("script faulted: {f}"));
    }
    let calls = ex.trace.api_sequence();
    let mut it = calls.iter();
    for stage in plan.stages() {
        if !it.any(|c| c == stage.api_name()) {
            return Err(format!("planned stage `{stage}` missing from the trace or out of order"));
        }
    }
    Ok(())
}

fn generate_one(
    index: usize,
    backend: &dyn Backend,
    seed: u64,
    catalog: &Catalog,
    env: &HostEnv,
    limits: &RuntimeLimits,
) -> Result<InstructionRecord, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let category = Category::ALL[index % Category::ALL.len()];
    let text = bounded_requirement(&mut rng, catalog, category);
    let prepared = prepare(&Requirement::new(&text)?, backend, PLAN_RETRIES)?;
    let report = prepared.report;
    let plan = match &report.plan {
        Some(p) => p.to_block(),
        // Keep whatever the model answered so a reviewer can fix it.
        None => report.exchanges.first().map(|x| x.reply.clone()).unwrap_or_default(),
    };
    let mut record = InstructionRecord {
        requirement: text,
        plan,
        script: report.script.unwrap_or_default(),
        validated: false,
        origin: Origin::Generated,
    };
    record.validated = validate_record(&record, env, limits).is_ok();
    Ok(record)
}

/// Generates `count` records. Record `i` depends only on `(seed, i)`, so the
/// output is identical however the work is scheduled.
pub fn generate_instructions(
    count: usize,
    backend: &dyn Backend,
    seed: u64,
    env: &HostEnv,
    limits: &RuntimeLimits,
) -> Result<Vec<InstructionRecord>, BenchError> {
    if count == 0 {
        return Err(BenchError::ZeroCount);
    }
    (0..count).into_par_iter().map(|i| generate_one(i, backend, seed, &env.catalog, env, limits)).collect()
}

pub fn write_jsonl<W: Write>(records: &[InstructionRecord], out: W) -> Result<(), BenchError> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Blank lines are skipped; anything else must be one record.
pub fn read_jsonl<R: Read>(input: R) -> Result<Vec<InstructionRecord>, BenchError> {
    let mut records = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|_| BenchError::MalformedLine(n + 1))?;
        records.push(record);
    }
    Ok(records)
}

pub fn export_jsonl(records: &[InstructionRecord], path: impl AsRef<Path>) -> Result<(), BenchError> {
    write_jsonl(records, std::fs::File::create(path)?)
}

pub fn import_jsonl(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>, BenchError> {
    read_jsonl(std::fs::File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub text: String,
    /// Character offsets; the span is exactly the response.
    pub response_start: usize,
    pub response_end: usize,
}

impl TrainingSample {
    pub fn response(&self) -> String {
        self.text.chars().skip(self.response_start).take(self.response_end - self.response_start).collect()
    }
}

/// The response text: the plan block, a blank line, then the script block.
pub fn render_response(record: &InstructionRecord) -> String {
    let mut script = record.script.clone();
    if !script.ends_with('\n') {
        script.push('\n');
    }
    format!("{}\n\n```script\n{script}```", record.plan.trim_end())
}

/// `requirement + "\n" + separator + "\n" + response`; everything before the
/// response is masked out of the loss.
pub fn render_training_sample(record: &InstructionRecord, separator: &str) -> Result<TrainingSample, BenchError> {
    if separator.is_empty() {
        return Err(BenchError::EmptySeparator);
    }
    if !record.validated {
        return Err(BenchError::Unvalidated);
    }
    let prefix = format!("{}\n{separator}\n", record.requirement);
    let response = render_response(record);
    let response_start = prefix.chars().count();
    let response_end = response_start + response.chars().count();
    Ok(TrainingSample { text: prefix + &response, response_start, response_end })
}

/// Splits a response back into its plan and script.
pub fn parse_response(response: &str) -> Option<(Plan, String)> {
    let plan = Plan::from_reply(response).ok()?;
    let (_, script) = fenced_block(response, "script")?;
    Some((plan, script.to_string()))
}
