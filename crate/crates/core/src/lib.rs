// SPDX-License-Identifier: Apache-2.0
//! Flow automation workbench: a deterministic flow simulator, a sandboxed
//! script interpreter, a grid tuner, the plan/script agent pipeline, and the
//! grading and dataset harness built on top of them.

pub mod agent;
pub mod bench;
pub mod dse;
pub mod flowsim;
pub mod miniscript;
