//! Chat backends: a remote chat-completion client and deterministic stubs.

use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decision::{fallback_action, parse_action_name, MetaAction, SECTION_ALLOWED, SECTION_NEGOTIATION, SECTION_SCENE, SECTION_SYSTEM};
use crate::error::GatewayError;
use crate::negotiation::COORDINATOR_HEADER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    /// Per-attempt timeout in seconds.
    pub timeout: f64,
}

impl ChatRequest {
    pub fn single(system: &str, user: &str) -> Self {
        Self {
            messages: vec![
                ChatMessage { role: Role::System, content: system.to_string() },
                ChatMessage { role: Role::User, content: user.to_string() },
            ],
            temperature: 0.0,
            max_reply_tokens: 256,
            timeout: 30.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(GatewayError::Request("at least one user message is required".into()));
        }
        if !(self.timeout > 0.0) {
            return Err(GatewayError::Request("timeout must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Request("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines.
    pub fn full_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendMode {
    Remote,
    StubCompliant,
    StubAdversarial,
}

impl FromStr for BackendMode {
    type Err = GatewayError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendMode::Remote),
            "stub" | "stub-compliant" => Ok(BackendMode::StubCompliant),
            "adversarial-stub" | "stub-adversarial" => Ok(BackendMode::StubAdversarial),
            other => Err(GatewayError::Config(format!("unknown backend `{other}`"))),
        }
    }
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendMode::Remote => "remote",
            BackendMode::StubCompliant => "stub",
            BackendMode::StubAdversarial => "adversarial-stub",
        })
    }
}

pub const API_KEY_ENV: &str = "CODRIVE_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub retry_budget: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff: Duration,
    pub seed: u64,
}

impl BackendConfig {
    pub fn new(mode: BackendMode) -> Self {
        Self {
            mode,
            endpoint: None,
            model: "gpt-4o-mini".to_string(),
            api_key_env: API_KEY_ENV.to_string(),
            retry_budget: 2,
            backoff: Duration::from_millis(500),
            seed: 0,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError>;

    /// Remote backends are worth calling concurrently.
    fn is_remote(&self) -> bool {
        false
    }
}

pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn ChatBackend>, GatewayError> {
    Ok(match config.mode {
        BackendMode::StubCompliant => Box::new(StubBackend { adversarial: false, seed: config.seed }),
        BackendMode::StubAdversarial => Box::new(StubBackend { adversarial: true, seed: config.seed }),
        BackendMode::Remote => Box::new(RemoteBackend::new(config)?),
    })
}

/// Scripted stand-in for the language model. The compliant stub follows the
/// negotiation advice; the adversarial one never reads it.
#[derive(Debug, Clone)]
pub struct StubBackend {
    pub adversarial: bool,
    /// Accepted for interface parity; replies do not depend on it.
    pub seed: u64,
}

/// Prompt facts the stub acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct StubFacts {
    pub speed: Option<f64>,
    pub desired_speed: Option<f64>,
    pub speed_step: Option<f64>,
    pub must_yield: bool,
    pub passes_first: bool,
    pub allowed: Vec<MetaAction>,
}

fn section<'a>(text: &'a str, header: &str) -> &'a str {
    let Some(start) = text.find(header) else { return "" };
    let body = &text[start + header.len()..];
    match body.find("\n## ") {
        Some(end) => &body[..end],
        None => body,
    }
}

fn number_after(text: &str, marker: &str) -> Option<f64> {
    let rest = &text[text.find(marker)? + marker.len()..];
    let end = rest.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')).unwrap_or(rest.len());
    rest[..end].parse().ok()
}

pub fn parse_stub_facts(prompt: &str) -> StubFacts {
    let system = section(prompt, SECTION_SYSTEM);
    let scene = section(prompt, SECTION_SCENE);
    let negotiation = section(prompt, SECTION_NEGOTIATION);
    let allowed = section(prompt, SECTION_ALLOWED)
        .lines()
        .filter_map(|l| l.trim().strip_prefix("- "))
        .filter_map(|l| parse_action_name(l.split(':').next().unwrap_or("")))
        .collect();
    StubFacts {
        speed: number_after(scene, " at "),
        desired_speed: number_after(system, "desired speed is "),
        speed_step: number_after(system, "reference speed by "),
        must_yield: negotiation.lines().any(|l| l.trim_start().starts_with("- You yield")),
        passes_first: negotiation.lines().any(|l| l.trim_start().starts_with("- You pass first")),
        allowed,
    }
}

impl StubBackend {
    pub fn policy(&self, facts: &StubFacts) -> MetaAction {
        let allowed = |a: MetaAction| facts.allowed.contains(&a);
        let wanted = if !self.adversarial && facts.must_yield {
            MetaAction::SlowDown
        } else if !self.adversarial && facts.passes_first {
            if allowed(MetaAction::SpeedUp) {
                MetaAction::SpeedUp
            } else {
                MetaAction::Cruise
            }
        } else {
            match (facts.speed, facts.desired_speed) {
                (Some(v), Some(vd)) => {
                    let band = facts.speed_step.unwrap_or(2.0) / 2.0;
                    if v < vd - band {
                        MetaAction::SpeedUp
                    } else if v > vd + band {
                        MetaAction::SlowDown
                    } else {
                        MetaAction::Cruise
                    }
                }
                _ => MetaAction::Cruise,
            }
        };
        if allowed(wanted) || facts.allowed.is_empty() {
            wanted
        } else {
            fallback_action(&facts.allowed)
        }
    }
}

impl ChatBackend for StubBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let text = request.full_text();
        if text.contains(COORDINATOR_HEADER) {
            let lines: Vec<String> = text
                .lines()
                .filter_map(|l| l.strip_prefix("Pair ")?.split_once(':').map(|(n, _)| format!("Pair {n}: keep")))
                .collect();
            return Ok(lines.join("\n"));
        }
        let facts = parse_stub_facts(&text);
        let action = self.policy(&facts);
        let why = if !self.adversarial && facts.must_yield {
            "the coordinator asks me to yield"
        } else if !self.adversarial && facts.passes_first {
            "the coordinator lets me pass first"
        } else {
            "tracking the desired speed"
        };
        Ok(format!("Decision: {}\nRationale: {why}.", action.name()))
    }
}

/// Chat-completion client over HTTPS with bearer authentication.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
    retry_budget: u32,
    backoff: Duration,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("remote backend needs an endpoint".into()))?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model: config.model.clone(),
            api_key,
            retry_budget: config.retry_budget,
            backoff: config.backoff,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, Attempt> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_reply_tokens,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .timeout(Duration::from_secs_f64(request.timeout))
            .json(&body)
            .send()
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(GatewayError::Protocol(format!("HTTP {status}"))));
        }
        let value: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(GatewayError::Protocol(format!("response is not JSON: {e}"))))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Attempt::Fatal(GatewayError::Protocol("missing choices[0].message.content".into())))
    }
}

enum Attempt {
    Transient(String),
    Fatal(GatewayError),
}

impl ChatBackend for RemoteBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retry_budget {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transient(e)) => {
                    log::warn!("chat attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(GatewayError::Unavailable { attempts: self.retry_budget + 1, last })
    }

    fn is_remote(&self) -> bool {
        true
    }
}
