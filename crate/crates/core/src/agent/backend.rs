// SPDX-License-Identifier: Apache-2.0
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::Message;
use super::rules::{RuleBackend, RuleVariant};
use super::AgentError;

/// A completion source: conversation in, reply text out.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<String, AgentError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    RuleBased,
    /// Valid plans, syntactically broken scripts.
    RuleBrokenCodegen,
    /// Plans that skip synthesis.
    RuleBrokenPlanner,
}

impl BackendKind {
    /// Accepts the config spellings plus the short CLI forms.
    pub fn parse(s: &str) -> Option<BackendKind> {
        Some(match s {
            "remote" => BackendKind::Remote,
            "rule" | "rule_based" | "rule-based" => BackendKind::RuleBased,
            "rule_broken_codegen" | "broken-codegen" => BackendKind::RuleBrokenCodegen,
            "rule_broken_planner" | "broken-planner" => BackendKind::RuleBrokenPlanner,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API secret.
    pub auth_env: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::RuleBased,
            endpoint: None,
            model: "automage".into(),
            auth_env: "EDAGENT_API_KEY".into(),
            temperature: 0.0,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

impl BackendConfig {
    pub fn rule_based() -> BackendConfig {
        BackendConfig::default()
    }

    pub fn with_kind(kind: BackendKind) -> BackendConfig {
        BackendConfig { kind, ..BackendConfig::default() }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite number >= 0");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout_secs must be positive");
        }
        if self.kind == BackendKind::Remote {
            match &self.endpoint {
                None => return bad("remote backend needs an endpoint"),
                Some(e) if reqwest::Url::parse(e).is_err() => return bad("endpoint is not a URL"),
                _ => {}
            }
            if self.auth_env.is_empty() {
                return bad("auth_env must name an environment variable");
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Backend>, AgentError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Remote => Box::new(RemoteBackend::new(self.clone())?),
            BackendKind::RuleBased => Box::new(RuleBackend::new(RuleVariant::Oracle)),
            BackendKind::RuleBrokenCodegen => Box::new(RuleBackend::new(RuleVariant::BrokenCodegen)),
            BackendKind::RuleBrokenPlanner => Box::new(RuleBackend::new(RuleVariant::BrokenPlanner)),
        })
    }
}

/// Chat-completion client: POSTs `{model, messages, temperature}` and reads
/// `choices[0].message.content`.
pub struct RemoteBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<RemoteBackend, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| AgentError::BackendUnreachable(e.to_string()))?;
        Ok(RemoteBackend { config, client })
    }

    fn attempt(&self, body: &serde_json::Value, secret: &str) -> Result<String, Attempt> {
        let endpoint = self.config.endpoint.as_deref().expect("validated");
        let response = self
            .client
            .post(endpoint)
            .bearer_auth(secret)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(AgentError::BackendUnreachable(format!("HTTP {status}"))));
        }
        let value: serde_json::Value =
            response.json().map_err(|e| Attempt::Fatal(AgentError::BackendProtocol(e.to_string())))?;
        value["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| {
            Attempt::Fatal(AgentError::BackendProtocol("reply has no choices[0].message.content".into()))
        })
    }
}

enum Attempt {
    Retry(String),
    Fatal(AgentError),
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, AgentError> {
        let secret = std::env::var(&self.config.auth_env)
            .map_err(|_| AgentError::MissingSecret(self.config.auth_env.clone()))?;
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                tracing::warn!(attempt, error = %last, "retrying completion request");
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body, &secret) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(AgentError::BackendUnreachable(format!(
            "{} attempts failed; last error: {last}",
            self.config.max_retries + 1
        )))
    }
}
