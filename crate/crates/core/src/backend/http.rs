//! Chat-completion HTTP backend.
//!
//! Sends one POST per attempt with a system prompt for the role and the
//! canonical payload as the user message, then parses the first choice's
//! message content as the structured response. Transport errors, 5xx/429
//! statuses and undecodable bodies are retried with exponential backoff.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{canonicalize, validate_body, AgentRequest, AgentResponse, AgentRole, Backend, Usage};
use crate::error::BackendError;

const DEFAULT_AGENTS: &str = include_str!("../../config/agents.toml");

/// System prompts per role plus the decoding temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPrompts {
    pub temperature: f64,
    pub prompts: BTreeMap<AgentRole, String>,
}

impl AgentPrompts {
    pub fn from_toml(text: &str) -> Result<Self, BackendError> {
        let p: AgentPrompts = toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        for role in AgentRole::ALL {
            if !p.prompts.contains_key(&role) {
                return Err(BackendError::Config(format!("no prompt for {role:?}")));
            }
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

impl Default for AgentPrompts {
    fn default() -> Self {
        Self::from_toml(DEFAULT_AGENTS).expect("bundled agent config parses")
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub concurrency_limit: usize,
    pub timeout: Duration,
    pub prompts: AgentPrompts,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: "MESHRAG_API_KEY".into(),
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            concurrency_limit: 8,
            timeout: Duration::from_secs(120),
            prompts: AgentPrompts::default(),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        PermitGuard { permits: self }
    }
}

struct PermitGuard<'a> {
    permits: &'a Permits,
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.permits.free.lock().expect("permit lock poisoned") += 1;
        self.permits.cv.notify_one();
    }
}

enum AttemptError {
    Retryable(String, Usage),
    Fatal(String),
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    permits: Permits,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.endpoint.trim().is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        if config.max_attempts == 0 {
            return Err(BackendError::Config("max_attempts must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let permits = Permits::new(config.concurrency_limit);
        Ok(Self {
            config,
            agent,
            api_key,
            permits,
        })
    }

    fn request_body(&self, request: &AgentRequest) -> Value {
        let system = self.config.prompts.prompts.get(&request.role).cloned().unwrap_or_default();
        json!({
            "model": self.config.model,
            "temperature": self.config.prompts.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": canonicalize(&request.payload).to_string()},
            ],
        })
    }

    fn attempt(&self, request: &AgentRequest, body: &Value) -> Result<(Value, Usage), AttemptError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| AttemptError::Retryable(format!("transport: {e}"), Usage::default()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Retryable(format!("reading body: {e}"), Usage::default()))?;
        if status == 429 || status >= 500 {
            return Err(AttemptError::Retryable(format!("HTTP {status}"), Usage::default()));
        }
        if status >= 400 {
            return Err(AttemptError::Fatal(format!("HTTP {status}: {text}")));
        }
        let envelope: Value = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Retryable(format!("malformed body: {e}"), Usage::default()))?;
        let usage = Usage {
            tokens_in: envelope["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            tokens_out: envelope["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        let content = envelope["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| AttemptError::Retryable("no message content".into(), usage))?;
        let parsed: Value = serde_json::from_str(content.trim())
            .map_err(|e| AttemptError::Retryable(format!("content is not JSON: {e}"), usage))?;
        validate_body(request.role, &parsed).map_err(|e| AttemptError::Retryable(e.to_string(), usage))?;
        Ok((parsed, usage))
    }
}

impl Backend for HttpBackend {
    fn invoke_raw(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
        let _permit = self.permits.acquire();
        let body = self.request_body(request);
        let started = Instant::now();
        let mut spent = Usage::default();
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(request, &body) {
                Ok((parsed, usage)) => {
                    spent.tokens_in += usage.tokens_in;
                    spent.tokens_out += usage.tokens_out;
                    return Ok(AgentResponse {
                        body: parsed,
                        usage: spent,
                        elapsed_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                    });
                }
                Err(AttemptError::Fatal(msg)) => {
                    return Err(BackendError::TransportFailure {
                        attempts: attempt,
                        message: msg,
                    })
                }
                Err(AttemptError::Retryable(msg, usage)) => {
                    spent.tokens_in += usage.tokens_in;
                    spent.tokens_out += usage.tokens_out;
                    last = msg;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(BackendError::TransportFailure {
            attempts: self.config.max_attempts,
            message: last,
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}
