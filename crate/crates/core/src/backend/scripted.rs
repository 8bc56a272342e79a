//! Deterministic scripted backend for hermetic runs.
//!
//! A script is a JSON array of entries. Each entry names a role, a match rule
//! and a response:
//!
//! ```json
//! [
//!   {"role": "QualityAssessor", "match": {"when": {"answer": "Seed text"}},
//!    "response": {"completeness": 0.70, "breadth": 0.65}},
//!   {"role": "PartialGenerator", "match": "*", "response": {"text": "..."}},
//!   {"role": "RelevanceAssessor", "match": "*", "policy": "composite_tiers"}
//! ]
//! ```
//!
//! Match rules, in lookup order:
//! 1. `{"digest": "<hex>"}` or `{"payload": {...}}`: exact canonical payload digest.
//! 2. `{"when": {...}}`: every listed key equals the canonical payload value;
//!    the entry with the most keys wins, then file order.
//! 3. `"*"`: role-level wildcard.
//!
//! The answer is a pure function of `(role, canonical payload)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{canonicalize, estimate_tokens, payload_digest, AgentRequest, AgentResponse, AgentRole, Backend, Usage};
use crate::error::BackendError;
use crate::relevance::{CompositeWeights, RelevanceTier, TierThresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchKey {
    Wildcard(WildcardMarker),
    Digest { digest: String },
    Payload { payload: Map<String, Value> },
    When { when: Map<String, Value> },
}

/// Serializes as the string `"*"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WildcardMarker;

impl Serialize for WildcardMarker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("*")
    }
}

impl<'de> Deserialize<'de> for WildcardMarker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "*" {
            Ok(WildcardMarker)
        } else {
            Err(serde::de::Error::custom(format!("expected \"*\", got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponsePolicy {
    /// Relevance only: tier from the weighted signal composite.
    CompositeTiers,
}

/// One script line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: AgentRole,
    #[serde(rename = "match")]
    pub match_key: MatchKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<ResponsePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub elapsed_ms: u64,
}

impl ScriptEntry {
    pub fn wildcard(role: AgentRole, response: Value) -> Self {
        Self {
            role,
            match_key: MatchKey::Wildcard(WildcardMarker),
            response: Some(response),
            policy: None,
            usage: None,
            elapsed_ms: 0,
        }
    }

    pub fn when(role: AgentRole, when: Value, response: Value) -> Self {
        let when = match when {
            Value::Object(m) => m,
            other => panic!("`when` must be an object, got {other}"),
        };
        Self {
            role,
            match_key: MatchKey::When { when },
            response: Some(response),
            policy: None,
            usage: None,
            elapsed_ms: 0,
        }
    }

    pub fn exact(role: AgentRole, payload: Value, response: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            other => panic!("`payload` must be an object, got {other}"),
        };
        Self {
            role,
            match_key: MatchKey::Digest {
                digest: payload_digest(&payload),
            },
            response: Some(response),
            policy: None,
            usage: None,
            elapsed_ms: 0,
        }
    }

    pub fn tier_policy(role: AgentRole) -> Self {
        Self {
            role,
            match_key: MatchKey::Wildcard(WildcardMarker),
            response: None,
            policy: Some(ResponsePolicy::CompositeTiers),
            usage: None,
            elapsed_ms: 0,
        }
    }

    pub fn with_elapsed_ms(mut self, ms: u64) -> Self {
        self.elapsed_ms = ms;
        self
    }

    pub fn with_usage(mut self, usage: Usage) -> Self {
        self.usage = Some(usage);
        self
    }
}

#[derive(Debug, Clone)]
enum Reply {
    Canned(Value),
    CompositeTiers,
}

#[derive(Debug, Clone)]
struct Compiled {
    reply: Reply,
    usage: Option<Usage>,
    elapsed_ms: u64,
}

#[derive(Debug, Clone)]
struct WhenRule {
    fields: Map<String, Value>,
    compiled: Compiled,
}

/// Immutable, lock-free scripted backend.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    exact: BTreeMap<(AgentRole, String), Compiled>,
    when: BTreeMap<AgentRole, Vec<WhenRule>>,
    wildcard: BTreeMap<AgentRole, Compiled>,
    thresholds: TierThresholds,
    weights: CompositeWeights,
}

impl ScriptedBackend {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        let mut backend = ScriptedBackend::default();
        let mut seen_when: BTreeSet<(AgentRole, String)> = BTreeSet::new();
        for entry in entries {
            let role = entry.role;
            let reply = match (entry.response, entry.policy) {
                (Some(body), None) => {
                    super::validate_body(role, &body)
                        .map_err(|e| BackendError::ParseError(format!("{role:?} entry: {e}")))?;
                    Reply::Canned(body)
                }
                (None, Some(ResponsePolicy::CompositeTiers)) if role == AgentRole::RelevanceAssessor => {
                    Reply::CompositeTiers
                }
                (None, Some(_)) => {
                    return Err(BackendError::ParseError(format!(
                        "{role:?} entry: composite_tiers policy only applies to RelevanceAssessor"
                    )))
                }
                _ => {
                    return Err(BackendError::ParseError(format!(
                        "{role:?} entry needs exactly one of `response` or `policy`"
                    )))
                }
            };
            let compiled = Compiled {
                reply,
                usage: entry.usage,
                elapsed_ms: entry.elapsed_ms,
            };
            match entry.match_key {
                MatchKey::Wildcard(_) => {
                    if backend.wildcard.insert(role, compiled).is_some() {
                        return Err(BackendError::DuplicateEntry {
                            role,
                            key: "*".into(),
                        });
                    }
                }
                MatchKey::Digest { digest } => backend.insert_exact(role, digest, compiled)?,
                MatchKey::Payload { payload } => backend.insert_exact(role, payload_digest(&payload), compiled)?,
                MatchKey::When { when } => {
                    let fields = match canonicalize(&when) {
                        Value::Object(m) => m,
                        _ => unreachable!("canonicalize returns an object"),
                    };
                    let key = Value::Object(fields.clone()).to_string();
                    if !seen_when.insert((role, key.clone())) {
                        return Err(BackendError::DuplicateEntry { role, key });
                    }
                    backend.when.entry(role).or_default().push(WhenRule { fields, compiled });
                }
            }
        }
        Ok(backend)
    }

    fn insert_exact(&mut self, role: AgentRole, digest: String, compiled: Compiled) -> Result<(), BackendError> {
        let digest = digest.to_lowercase();
        if self.exact.insert((role, digest.clone()), compiled).is_some() {
            return Err(BackendError::DuplicateEntry { role, key: digest });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| BackendError::ParseError(e.to_string()))?;
        Self::from_entries(entries)
    }

    /// Loads a script file.
    pub fn load_script(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::ParseError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A backend with one wildcard per role that answers every request:
    /// relevance via the composite tier policy, fixed texts elsewhere, and a
    /// quality report that stops refinement immediately.
    pub fn wildcard_defaults() -> Self {
        Self::from_entries(vec![
            ScriptEntry::tier_policy(AgentRole::RelevanceAssessor),
            ScriptEntry::wildcard(
                AgentRole::PartialGenerator,
                json!({"text": "Domain-scoped evidence relevant to the query."}),
            ),
            ScriptEntry::wildcard(
                AgentRole::Synthesizer,
                json!({"text": "Synthesized cross-domain answer."}),
            ),
            ScriptEntry::wildcard(
                AgentRole::QualityAssessor,
                json!({"completeness": 0.9, "breadth": 0.9, "gaps": [], "followups": []}),
            ),
        ])
        .expect("default script is valid")
    }

    pub fn with_tier_policy(mut self, thresholds: TierThresholds, weights: CompositeWeights) -> Self {
        self.thresholds = thresholds;
        self.weights = weights;
        self
    }

    fn lookup(&self, role: AgentRole, canonical: &Map<String, Value>, digest: &str) -> Option<&Compiled> {
        if let Some(c) = self.exact.get(&(role, digest.to_string())) {
            return Some(c);
        }
        let best_when = self.when.get(&role).and_then(|rules| {
            rules
                .iter()
                .filter(|r| r.fields.iter().all(|(k, v)| canonical.get(k) == Some(v)))
                .fold(None::<&WhenRule>, |best, r| match best {
                    Some(b) if b.fields.len() >= r.fields.len() => Some(b),
                    _ => Some(r),
                })
        });
        if let Some(r) = best_when {
            return Some(&r.compiled);
        }
        self.wildcard.get(&role)
    }

    fn tier_policy_body(&self, payload: &Map<String, Value>) -> Value {
        let signal = |k: &str| payload.get(k).and_then(Value::as_f64).unwrap_or(0.0);
        let composite = self
            .weights
            .composite(signal("s_sim"), signal("s_rich"), signal("s_hist"));
        let tier: RelevanceTier = self.thresholds.tier_for(composite);
        json!({
            "tier": tier,
            "score": composite,
            "rationale": format!("composite score {composite:.3}"),
        })
    }
}

impl Backend for ScriptedBackend {
    fn invoke_raw(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
        let canonical = match canonicalize(&request.payload) {
            Value::Object(m) => m,
            _ => unreachable!("canonicalize returns an object"),
        };
        let digest = payload_digest(&request.payload);
        let compiled = self
            .lookup(request.role, &canonical, &digest)
            .ok_or_else(|| BackendError::NoScriptMatch {
                role: request.role,
                digest: digest.clone(),
            })?;
        let body = match &compiled.reply {
            Reply::Canned(v) => v.clone(),
            Reply::CompositeTiers => self.tier_policy_body(&request.payload),
        };
        let usage = compiled.usage.unwrap_or_else(|| Usage {
            tokens_in: estimate_tokens(&Value::Object(canonical).to_string()),
            tokens_out: estimate_tokens(&body.to_string()),
        });
        Ok(AgentResponse {
            body,
            usage,
            elapsed_ms: compiled.elapsed_ms,
            attempts: 1,
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
