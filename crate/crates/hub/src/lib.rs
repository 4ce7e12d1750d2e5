// SPDX-License-Identifier: Apache-2.0
//! Operator surfaces for the agent: the `edagent` CLI and an HTTP service
//! with streamed run events and an append-only run store.

pub mod cli;
pub mod config;
pub mod events;
pub mod http;
pub mod service;
pub mod store;

pub use config::HubConfig;
pub use events::{replay_trace, EventBody, RunEvent, RunState};
pub use service::{Hub, HubError, RunInfo};
