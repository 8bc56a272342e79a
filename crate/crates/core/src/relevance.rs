//! Domain relevance: three bounded signals per domain, then a tier from the
//! relevance agent.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{AgentRequest, AgentResponse, AgentRole, RelevanceBody};
use crate::dispatch::{CallSpec, Gate, Session};
use crate::embed::{affine_similarity, domain_text, pair};
use crate::error::{BackendError, RunError, SignalError};
use crate::ledger::Stage;
use crate::model::{DomainId, DomainProfile, DomainRegistry, Query};

/// History signal for a domain that has never been scored.
pub const COLD_START_PRIOR: f64 = 0.5;

pub const ASSESSMENT_FAILED: &str = "assessment-failed";

/// Ordered so that `High > Moderate > Potential > Irrelevant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelevanceTier {
    #[serde(alias = "irrelevant", alias = "Irrelevant")]
    Irrelevant,
    #[serde(alias = "potential", alias = "Potential")]
    Potential,
    #[serde(alias = "moderate", alias = "Moderate")]
    Moderate,
    #[serde(alias = "high", alias = "High")]
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalScores {
    pub s_sim: f64,
    pub s_rich: f64,
    pub s_hist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceAssessment {
    pub domain_id: DomainId,
    pub tier: RelevanceTier,
    pub signals: SignalScores,
    pub composite_score: f64,
    pub rationale: String,
}

/// Weights of the deterministic composite used when the agent gives no score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositeWeights {
    pub sim: f64,
    pub rich: f64,
    pub hist: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            sim: 0.5,
            rich: 0.25,
            hist: 0.25,
        }
    }
}

impl CompositeWeights {
    pub fn composite(&self, s_sim: f64, s_rich: f64, s_hist: f64) -> f64 {
        (self.sim * s_sim + self.rich * s_rich + self.hist * s_hist).clamp(0.0, 1.0)
    }

    pub fn of(&self, s: &SignalScores) -> f64 {
        self.composite(s.s_sim, s.s_rich, s.s_hist)
    }
}

/// Composite cut-offs used by the scripted backend's tier policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierThresholds {
    pub high: f64,
    pub moderate: f64,
    pub potential: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self {
            high: 0.55,
            moderate: 0.45,
            potential: 0.30,
        }
    }
}

impl TierThresholds {
    pub fn tier_for(&self, composite: f64) -> RelevanceTier {
        if composite >= self.high {
            RelevanceTier::High
        } else if composite >= self.moderate {
            RelevanceTier::Moderate
        } else if composite >= self.potential {
            RelevanceTier::Potential
        } else {
            RelevanceTier::Irrelevant
        }
    }
}

/// `(cos + 1) / 2` between the query and the domain representation.
pub fn semantic_similarity(query: &Query, domain: &DomainProfile) -> Result<f64, SignalError> {
    let (q, d) = pair(query, domain.embedding.as_ref(), || domain_text(domain));
    affine_similarity(&q, &d)
}

/// Report count relative to the largest domain in the registry.
pub fn knowledge_richness(domain_id: &DomainId, registry: &DomainRegistry) -> Result<f64, SignalError> {
    let domain = registry
        .get(domain_id)
        .ok_or_else(|| SignalError::UnknownDomain(domain_id.to_string()))?;
    let max = registry
        .domains()
        .map(DomainProfile::report_count)
        .max()
        .ok_or(SignalError::EmptyRegistry)?;
    Ok(domain.report_count() as f64 / max as f64)
}

/// Mean historical quality, or [`COLD_START_PRIOR`] with no history.
pub fn historical_performance(domain_id: &DomainId, registry: &DomainRegistry) -> Result<f64, SignalError> {
    let history = registry
        .history(domain_id)
        .ok_or_else(|| SignalError::UnknownDomain(domain_id.to_string()))?;
    if history.is_empty() {
        return Ok(COLD_START_PRIOR);
    }
    Ok((history.iter().sum::<f64>() / history.len() as f64).clamp(0.0, 1.0))
}

pub fn compute_signals(query: &Query, domain: &DomainProfile, registry: &DomainRegistry) -> Result<SignalScores, SignalError> {
    Ok(SignalScores {
        s_sim: semantic_similarity(query, domain)?,
        s_rich: knowledge_richness(&domain.id, registry)?,
        s_hist: historical_performance(&domain.id, registry)?,
    })
}

pub fn assessment_request(query: &Query, domain: &DomainProfile, signals: &SignalScores) -> AgentRequest {
    AgentRequest::new(
        AgentRole::RelevanceAssessor,
        json!({
            "query": query.text,
            "domain_name": domain.name,
            "domain_summary": domain.summary_text,
            "s_sim": signals.s_sim,
            "s_rich": signals.s_rich,
            "s_hist": signals.s_hist,
        }),
    )
}

/// Turns an agent reply (or failure) into an assessment. Failures fall back to
/// `POTENTIAL` so the domain stays reachable through later breadth expansion
/// without costing anything now.
pub fn assessment_from_response(
    domain_id: &DomainId,
    signals: SignalScores,
    response: Result<AgentResponse, BackendError>,
    weights: &CompositeWeights,
) -> RelevanceAssessment {
    let fallback = weights.of(&signals);
    match response.and_then(|r| r.decode::<RelevanceBody>(AgentRole::RelevanceAssessor)) {
        Ok(body) => RelevanceAssessment {
            domain_id: domain_id.clone(),
            tier: body.tier,
            signals,
            composite_score: body.score.map_or(fallback, |s| s.clamp(0.0, 1.0)),
            rationale: body.rationale,
        },
        Err(_) => RelevanceAssessment {
            domain_id: domain_id.clone(),
            tier: RelevanceTier::Potential,
            signals,
            composite_score: fallback,
            rationale: ASSESSMENT_FAILED.to_string(),
        },
    }
}

fn assessment_call(query: &Query, domain: &DomainProfile, signals: &SignalScores) -> CallSpec {
    CallSpec {
        domain_id: Some(domain.id.clone()),
        latency: std::time::Duration::from_millis(domain.cost_model.latency_ms),
        token_overhead: domain.cost_model.token_overhead,
        ..CallSpec::agent(Stage::Relevance, assessment_request(query, domain, signals))
    }
}

/// Assesses one domain with precomputed signals.
pub fn assess_domain(
    session: &Session<'_>,
    query: &Query,
    domain: &DomainProfile,
    signals: SignalScores,
    weights: &CompositeWeights,
) -> Result<RelevanceAssessment, RunError> {
    let outcome = session
        .call(assessment_call(query, domain, &signals), Gate::Open)
        .map_err(|h| RunError::BudgetExhaustedBeforeSeed(format!("{h:?} during relevance assessment")))?;
    Ok(assessment_from_response(&domain.id, signals, outcome, weights))
}

/// Sorts by tier (descending), composite (descending), then domain id.
pub fn sort_assessments(assessments: &mut [RelevanceAssessment]) {
    assessments.sort_by(|a, b| {
        b.tier
            .cmp(&a.tier)
            .then(b.composite_score.total_cmp(&a.composite_score))
            .then(a.domain_id.cmp(&b.domain_id))
    });
}

/// Assesses every registered domain concurrently and returns them ranked.
pub fn rank_domains(
    session: &Session<'_>,
    query: &Query,
    registry: &DomainRegistry,
    weights: &CompositeWeights,
) -> Result<Vec<RelevanceAssessment>, RunError> {
    if registry.is_empty() {
        return Err(SignalError::EmptyRegistry.into());
    }
    let signals: Vec<(&DomainProfile, SignalScores)> = registry
        .domains()
        .map(|d| compute_signals(query, d, registry).map(|s| (d, s)))
        .collect::<Result<_, _>>()?;
    let calls = signals.iter().map(|(d, s)| assessment_call(query, d, s)).collect();
    let dispatched = session.fan_out(calls, Gate::Open);
    if let Some(h) = dispatched.halted {
        return Err(RunError::BudgetExhaustedBeforeSeed(format!("{h:?} during relevance assessment")));
    }
    let mut out: Vec<RelevanceAssessment> = signals
        .into_iter()
        .zip(dispatched.outcomes)
        .map(|((d, s), outcome)| {
            let outcome = outcome.expect("every call dispatched when not halted");
            assessment_from_response(&d.id, s, outcome, weights)
        })
        .collect();
    sort_assessments(&mut out);
    Ok(out)
}
