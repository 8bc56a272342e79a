//! Pluggable agent interface.
//!
//! Every agent call goes through [`invoke`], which checks the request payload
//! against the fixed key set for its role, dispatches to a [`Backend`], and
//! validates the structured response before handing it back. A response that
//! does not decode is a failed call, never a partial answer.

pub mod http;
pub mod scripted;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::BackendError;
use crate::relevance::RelevanceTier;

pub use http::{AgentPrompts, HttpBackend, HttpConfig};
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    RelevanceAssessor,
    PartialGenerator,
    Synthesizer,
    QualityAssessor,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::RelevanceAssessor,
        AgentRole::PartialGenerator,
        AgentRole::Synthesizer,
        AgentRole::QualityAssessor,
    ];

    /// Identifier of the response shape expected from this role.
    pub fn decode_schema(self) -> &'static str {
        match self {
            AgentRole::RelevanceAssessor => "relevance.v1",
            AgentRole::PartialGenerator => "partial.v1",
            AgentRole::Synthesizer => "synthesis.v1",
            AgentRole::QualityAssessor => "quality.v1",
        }
    }

    /// `(required, optional)` payload keys.
    pub fn payload_keys(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            AgentRole::RelevanceAssessor => (
                &["query", "domain_name", "domain_summary", "s_sim", "s_rich", "s_hist"],
                &[],
            ),
            AgentRole::PartialGenerator => (&["query", "mode", "context_reports"], &[]),
            AgentRole::Synthesizer => (&["query", "partial_answers"], &["prior_answer"]),
            AgentRole::QualityAssessor => (&["query", "answer"], &[]),
        }
    }
}

/// Token usage reported for one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRequest {
    pub role: AgentRole,
    pub payload: Map<String, Value>,
    pub decode_schema: &'static str,
}

impl AgentRequest {
    /// Builds a request from any serializable payload struct.
    pub fn new(role: AgentRole, payload: impl Serialize) -> Self {
        let payload = match serde_json::to_value(payload).expect("payload serializes") {
            Value::Object(m) => m,
            other => panic!("payload must serialize to an object, got {other}"),
        };
        Self {
            role,
            payload,
            decode_schema: role.decode_schema(),
        }
    }

    pub fn digest(&self) -> String {
        payload_digest(&self.payload)
    }

    /// Checks the payload carries exactly the keys fixed for its role.
    pub fn validate(&self) -> Result<(), BackendError> {
        let (required, optional) = self.role.payload_keys();
        let invalid = |message: String| BackendError::InvalidPayload {
            role: self.role,
            message,
        };
        for k in required {
            if !self.payload.contains_key(*k) {
                return Err(invalid(format!("missing key {k:?}")));
            }
        }
        for k in self.payload.keys() {
            if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                return Err(invalid(format!("unexpected key {k:?}")));
            }
        }
        match self.payload.get("query") {
            Some(Value::String(q)) if !q.trim().is_empty() => Ok(()),
            _ => Err(invalid("query must be a non-empty string".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponse {
    pub body: Value,
    pub usage: Usage,
    pub elapsed_ms: u64,
    /// Transport attempts it took to obtain this response.
    pub attempts: u32,
}

impl AgentResponse {
    pub fn decode<T: DeserializeOwned>(&self, role: AgentRole) -> Result<T, BackendError> {
        serde_json::from_value(self.body.clone()).map_err(|e| BackendError::SchemaViolation {
            role,
            message: e.to_string(),
        })
    }
}

pub trait Backend: Send + Sync {
    /// Answers one request. Implementations need not validate the body; the
    /// [`invoke`] wrapper does.
    fn invoke_raw(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError>;

    fn name(&self) -> &str;
}

/// Validates the request, calls the backend, and validates the response body.
pub fn invoke(backend: &dyn Backend, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
    request.validate()?;
    let response = backend.invoke_raw(request)?;
    validate_body(request.role, &response.body)?;
    Ok(response)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceBody {
    pub tier: RelevanceTier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialBody {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionBody {
    pub claim: String,
    pub domain_id: String,
    #[serde(default)]
    pub report_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisBody {
    pub text: String,
    #[serde(default)]
    pub attributions: Vec<AttributionBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityBody {
    pub completeness: f64,
    pub breadth: f64,
    #[serde(default)]
    pub gaps: Vec<String>,
    #[serde(default)]
    pub followups: Vec<String>,
}

/// Checks that `body` decodes into the response shape for `role`.
pub fn validate_body(role: AgentRole, body: &Value) -> Result<(), BackendError> {
    let violation = |message: String| BackendError::SchemaViolation { role, message };
    let decode_err = |e: serde_json::Error| violation(e.to_string());
    match role {
        AgentRole::RelevanceAssessor => {
            let b: RelevanceBody = serde_json::from_value(body.clone()).map_err(decode_err)?;
            if b.score.is_some_and(|s| !s.is_finite()) {
                return Err(violation("score is not finite".into()));
            }
        }
        AgentRole::PartialGenerator => {
            let b: PartialBody = serde_json::from_value(body.clone()).map_err(decode_err)?;
            if b.text.trim().is_empty() {
                return Err(violation("text is empty".into()));
            }
        }
        AgentRole::Synthesizer => {
            let b: SynthesisBody = serde_json::from_value(body.clone()).map_err(decode_err)?;
            if b.text.trim().is_empty() {
                return Err(violation("text is empty".into()));
            }
        }
        AgentRole::QualityAssessor => {
            let b: QualityBody = serde_json::from_value(body.clone()).map_err(decode_err)?;
            if !b.completeness.is_finite() || !b.breadth.is_finite() {
                return Err(violation("scores must be finite".into()));
            }
        }
    }
    Ok(())
}

/// Canonical form used for digests and script matching: object keys sorted,
/// strings trimmed, and the top-level `query` lowercased.
pub fn canonicalize(payload: &Map<String, Value>) -> Value {
    let mut keys: Vec<&String> = payload.keys().collect();
    keys.sort();
    let mut out = Map::new();
    for k in keys {
        let v = canonical_value(&payload[k]);
        let v = match (k.as_str(), v) {
            ("query", Value::String(s)) => Value::String(s.to_lowercase()),
            (_, v) => v,
        };
        out.insert(k.clone(), v);
    }
    Value::Object(out)
}

fn canonical_value(v: &Value) -> Value {
    match v {
        Value::String(s) => Value::String(s.trim().to_string()),
        Value::Array(items) => Value::Array(items.iter().map(canonical_value).collect()),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), canonical_value(&m[k]));
            }
            Value::Object(out)
        }
        other => other.clone(),
    }
}

/// Hex SHA-256 of the canonical payload.
pub fn payload_digest(payload: &Map<String, Value>) -> String {
    let canonical = canonicalize(payload).to_string();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Rough token estimate (four characters per token, rounded up).
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
