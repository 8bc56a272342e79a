//! Tiered seeding: plan retrieval from relevance tiers, retrieve partial
//! answers from the selected domains in parallel, and fuse them into the seed
//! answer.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{AgentRequest, AgentResponse, AgentRole, PartialBody, SynthesisBody};
use crate::dispatch::{CallSpec, Gate, Halt, Session};
use crate::embed::{affine_similarity, pair, report_text};
use crate::error::{BackendError, RunError};
use crate::ledger::Stage;
use crate::model::{CommunityReport, DomainId, DomainProfile, DomainRegistry, Query};
use crate::refinement::QualityReport;
use crate::relevance::{RelevanceAssessment, RelevanceTier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedingPlan {
    pub entries: Vec<(DomainId, RetrievalMode)>,
    /// POTENTIAL domains held back for breadth expansion.
    pub deferred: Vec<DomainId>,
    /// IRRELEVANT domains; never contacted.
    pub excluded: Vec<DomainId>,
}

/// Maps tiers to retrieval: HIGH to global, MODERATE to local, POTENTIAL
/// deferred, IRRELEVANT excluded. Order follows the assessment ranking.
pub fn plan_seeding(assessments: &[RelevanceAssessment]) -> SeedingPlan {
    let mut plan = SeedingPlan {
        entries: Vec::new(),
        deferred: Vec::new(),
        excluded: Vec::new(),
    };
    for a in assessments {
        let id = a.domain_id.clone();
        match a.tier {
            RelevanceTier::High => plan.entries.push((id, RetrievalMode::Global)),
            RelevanceTier::Moderate => plan.entries.push((id, RetrievalMode::Local)),
            RelevanceTier::Potential => plan.deferred.push(id),
            RelevanceTier::Irrelevant => plan.excluded.push(id),
        }
    }
    plan
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCost {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub elapsed_ms: u64,
}

impl CallCost {
    fn of(r: &AgentResponse) -> Self {
        Self {
            tokens_in: r.usage.tokens_in,
            tokens_out: r.usage.tokens_out,
            elapsed_ms: r.elapsed_ms,
        }
    }
}

/// One domain's retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialAnswer {
    pub domain_id: DomainId,
    pub mode: RetrievalMode,
    /// Query text the retrieval answered (the original query or a follow-up).
    pub query_text: String,
    pub text: String,
    pub source_report_ids: Vec<String>,
    pub cost: CallCost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub claim: String,
    pub domain_id: DomainId,
    pub report_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedAnswer {
    pub text: String,
    pub attributions: Vec<Attribution>,
    /// 0 for the seed, incremented by each successful fusion.
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
}

impl SynthesizedAnswer {
    pub fn contributing_domains(&self) -> BTreeSet<DomainId> {
        self.attributions.iter().map(|a| a.domain_id.clone()).collect()
    }
}

/// Context sizes for global and local retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k_global: usize,
    pub k_local: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k_global: 8, k_local: 3 }
    }
}

impl RetrievalConfig {
    pub fn k_for(&self, mode: RetrievalMode) -> usize {
        match mode {
            RetrievalMode::Global => self.k_global,
            RetrievalMode::Local => self.k_local,
        }
    }
}

/// The `k` reports most similar to the query; ties go to the lower report id.
pub fn select_context<'d>(query: &Query, domain: &'d DomainProfile, k: usize) -> Vec<&'d CommunityReport> {
    let mut scored: Vec<(f64, &CommunityReport)> = domain
        .reports
        .iter()
        .map(|r| {
            let (q, e) = pair(query, r.embedding.as_ref(), || report_text(r));
            (affine_similarity(&q, &e).unwrap_or(0.0), r)
        })
        .collect();
    scored.sort_by(|(sa, ra), (sb, rb)| sb.total_cmp(sa).then_with(|| ra.id.cmp(&rb.id)));
    scored.into_iter().take(k).map(|(_, r)| r).collect()
}

/// Builds the retrieval request. Global context leads with the domain
/// summary; local context carries reports only.
pub fn retrieval_request(
    query: &Query,
    domain: &DomainProfile,
    mode: RetrievalMode,
    config: &RetrievalConfig,
) -> (AgentRequest, Vec<String>) {
    let reports = select_context(query, domain, config.k_for(mode));
    let mut context: Vec<Value> = Vec::with_capacity(reports.len() + 1);
    if mode == RetrievalMode::Global {
        context.push(json!({"title": "Domain summary", "text": domain.summary_text}));
    }
    context.extend(
        reports
            .iter()
            .map(|r| json!({"report_id": r.id, "title": r.title, "text": r.text})),
    );
    let sources = reports.iter().map(|r| r.id.clone()).collect();
    let request = AgentRequest::new(
        AgentRole::PartialGenerator,
        json!({"query": query.text, "mode": mode, "context_reports": context}),
    );
    (request, sources)
}

/// A retrieval to run against one domain.
#[derive(Debug, Clone)]
pub struct RetrievalTask<'d> {
    pub domain: &'d DomainProfile,
    pub query: Query,
    pub mode: RetrievalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalFailure {
    pub domain_id: DomainId,
    pub mode: RetrievalMode,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalBatch {
    /// Sorted by domain id; within a domain, in task order.
    pub partials: Vec<PartialAnswer>,
    pub failures: Vec<RetrievalFailure>,
    /// Domains whose retrieval was actually started.
    pub dispatched: Vec<DomainId>,
    pub halted: Option<Halt>,
}

fn partial_from(
    task: &RetrievalTask<'_>,
    sources: Vec<String>,
    outcome: Result<AgentResponse, BackendError>,
) -> Result<PartialAnswer, String> {
    let response = outcome.map_err(|e| e.to_string())?;
    let body: PartialBody = response
        .decode(AgentRole::PartialGenerator)
        .map_err(|e| e.to_string())?;
    Ok(PartialAnswer {
        domain_id: task.domain.id.clone(),
        mode: task.mode,
        query_text: task.query.text.clone(),
        text: body.text,
        source_report_ids: sources,
        cost: CallCost::of(&response),
    })
}

/// Runs retrieval tasks concurrently under `gate`.
pub fn run_retrievals(
    session: &Session<'_>,
    stage: Stage,
    tasks: &[RetrievalTask<'_>],
    config: &RetrievalConfig,
    gate: Gate,
) -> RetrievalBatch {
    let mut sources = Vec::with_capacity(tasks.len());
    let calls: Vec<CallSpec> = tasks
        .iter()
        .map(|t| {
            let (request, src) = retrieval_request(&t.query, t.domain, t.mode, config);
            sources.push(src);
            CallSpec {
                stage,
                domain_id: Some(t.domain.id.clone()),
                mode: Some(t.mode),
                latency: Duration::from_millis(t.domain.cost_model.latency_ms),
                token_overhead: t.domain.cost_model.token_overhead,
                request,
            }
        })
        .collect();
    let dispatched = session.fan_out(calls, gate);
    let mut batch = RetrievalBatch {
        halted: dispatched.halted,
        ..Default::default()
    };
    let mut ok: Vec<(usize, PartialAnswer)> = Vec::new();
    for (idx, ((task, src), outcome)) in tasks.iter().zip(sources).zip(dispatched.outcomes).enumerate() {
        let Some(outcome) = outcome else { continue };
        batch.dispatched.push(task.domain.id.clone());
        match partial_from(task, src, outcome) {
            Ok(p) => ok.push((idx, p)),
            Err(reason) => batch.failures.push(RetrievalFailure {
                domain_id: task.domain.id.clone(),
                mode: task.mode,
                reason,
            }),
        }
    }
    ok.sort_by(|(ia, a), (ib, b)| a.domain_id.cmp(&b.domain_id).then(ia.cmp(ib)));
    batch.partials = ok.into_iter().map(|(_, p)| p).collect();
    batch
}

fn single(session: &Session<'_>, task: RetrievalTask<'_>, config: &RetrievalConfig) -> Result<PartialAnswer, RetrievalFailure> {
    let mut batch = run_retrievals(session, Stage::Seeding, std::slice::from_ref(&task), config, Gate::Open);
    if let Some(p) = batch.partials.pop() {
        return Ok(p);
    }
    Err(batch.failures.pop().unwrap_or(RetrievalFailure {
        domain_id: task.domain.id.clone(),
        mode: task.mode,
        reason: format!("not started: {:?}", batch.halted),
    }))
}

/// Community-level retrieval over the domain summary and top-k reports.
pub fn retrieve_global(
    session: &Session<'_>,
    query: &Query,
    domain: &DomainProfile,
    config: &RetrievalConfig,
) -> Result<PartialAnswer, RetrievalFailure> {
    single(session, RetrievalTask { domain, query: query.clone(), mode: RetrievalMode::Global }, config)
}

/// Fine-grained retrieval over the top-k′ reports only.
pub fn retrieve_local(
    session: &Session<'_>,
    query: &Query,
    domain: &DomainProfile,
    config: &RetrievalConfig,
) -> Result<PartialAnswer, RetrievalFailure> {
    single(session, RetrievalTask { domain, query: query.clone(), mode: RetrievalMode::Local }, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedingOutcome {
    pub partials: Vec<PartialAnswer>,
    pub failures: Vec<RetrievalFailure>,
}

/// Dispatches every plan entry concurrently.
pub fn execute_seeding(
    session: &Session<'_>,
    plan: &SeedingPlan,
    query: &Query,
    registry: &DomainRegistry,
    config: &RetrievalConfig,
) -> Result<SeedingOutcome, RunError> {
    if plan.entries.is_empty() {
        return Err(RunError::NoRelevantDomain);
    }
    let tasks: Vec<RetrievalTask<'_>> = plan
        .entries
        .iter()
        .map(|(id, mode)| {
            let domain = registry
                .get(id)
                .ok_or_else(|| crate::error::CorpusError::UnknownDomain(id.to_string()))?;
            Ok(RetrievalTask { domain, query: query.clone(), mode: *mode })
        })
        .collect::<Result<_, RunError>>()?;
    let batch = run_retrievals(session, Stage::Seeding, &tasks, config, Gate::Open);
    if let Some(h) = batch.halted {
        return Err(RunError::BudgetExhaustedBeforeSeed(format!("{h:?} during seeding retrieval")));
    }
    Ok(SeedingOutcome {
        partials: batch.partials,
        failures: batch.failures,
    })
}

pub fn synthesis_request(query: &Query, prior: Option<&SynthesizedAnswer>, partials: &[PartialAnswer]) -> AgentRequest {
    let partial_answers: Vec<Value> = partials
        .iter()
        .map(|p| {
            json!({
                "domain_id": p.domain_id,
                "mode": p.mode,
                "text": p.text,
                "source_report_ids": p.source_report_ids,
            })
        })
        .collect();
    let mut payload = json!({"query": query.text, "partial_answers": partial_answers});
    if let Some(prior) = prior {
        payload["prior_answer"] = Value::String(prior.text.clone());
    }
    AgentRequest::new(AgentRole::Synthesizer, payload)
}

fn lead_sentence(text: &str) -> String {
    let text = text.trim();
    match text.find(['.', '!', '?']) {
        Some(i) => text[..=i].to_string(),
        None => text.to_string(),
    }
}

/// Keeps only attributions backed by a contributing partial (or by the prior
/// answer), restricts their report ids to sources that domain actually
/// supplied, and adds a whole-answer attribution for any contributing domain
/// the agent left uncredited.
pub fn reconcile_attributions(
    body: &SynthesisBody,
    prior: Option<&SynthesizedAnswer>,
    partials: &[PartialAnswer],
) -> Vec<Attribution> {
    let mut sources: BTreeMap<DomainId, BTreeSet<String>> = BTreeMap::new();
    for p in partials {
        sources
            .entry(p.domain_id.clone())
            .or_default()
            .extend(p.source_report_ids.iter().cloned());
    }
    if let Some(prior) = prior {
        for a in &prior.attributions {
            sources.entry(a.domain_id.clone()).or_default().extend(a.report_ids.iter().cloned());
        }
    }

    let mut out: Vec<Attribution> = prior.map(|p| p.attributions.clone()).unwrap_or_default();
    for a in &body.attributions {
        let id = DomainId(a.domain_id.clone());
        let Some(allowed) = sources.get(&id) else { continue };
        let attribution = Attribution {
            claim: a.claim.clone(),
            domain_id: id,
            report_ids: a.report_ids.iter().filter(|r| allowed.contains(*r)).cloned().collect(),
        };
        if !out.contains(&attribution) {
            out.push(attribution);
        }
    }
    let covered: BTreeSet<DomainId> = out.iter().map(|a| a.domain_id.clone()).collect();
    let mut seen = BTreeSet::new();
    for p in partials {
        if covered.contains(&p.domain_id) || !seen.insert(p.domain_id.clone()) {
            continue;
        }
        out.push(Attribution {
            claim: lead_sentence(&body.text),
            domain_id: p.domain_id.clone(),
            report_ids: sources[&p.domain_id].iter().cloned().collect(),
        });
    }
    out
}

/// Fuses the seeding partials into the iteration-0 answer. Any failure here is
/// fatal for the query.
pub fn synthesize_seed(session: &Session<'_>, query: &Query, partials: &[PartialAnswer]) -> Result<SynthesizedAnswer, RunError> {
    if partials.is_empty() {
        return Err(RunError::SynthesisFailed("no partial answers to synthesize".into()));
    }
    let spec = CallSpec::agent(Stage::Seeding, synthesis_request(query, None, partials));
    let response = session
        .call(spec, Gate::Open)
        .map_err(|h| RunError::BudgetExhaustedBeforeSeed(format!("{h:?} before seed synthesis")))?
        .and_then(|r| r.decode::<SynthesisBody>(AgentRole::Synthesizer))
        .map_err(|e| RunError::SynthesisFailed(e.to_string()))?;
    Ok(SynthesizedAnswer {
        attributions: reconcile_attributions(&response, None, partials),
        text: response.text,
        iteration: 0,
        quality: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptEntry, ScriptedBackend};
    use crate::clock::SimClock;
    use crate::ledger::CostLedger;
    use crate::model::{validate_corpus, Budget, ReportRecord, UnitVector};
    use crate::relevance::SignalScores;

    fn assessment(id: &str, tier: RelevanceTier) -> RelevanceAssessment {
        RelevanceAssessment {
            domain_id: id.into(),
            tier,
            signals: SignalScores { s_sim: 0.5, s_rich: 1.0, s_hist: 0.5 },
            composite_score: 0.5,
            rationale: String::new(),
        }
    }

    fn reg(domains: &[(&str, usize)]) -> DomainRegistry {
        let mut recs = Vec::new();
        for (d, n) in domains {
            for i in 0..*n {
                recs.push(ReportRecord {
                    report_id: format!("r{i:02}"),
                    domain_id: d.to_string(),
                    title: format!("{d} {i}"),
                    text: format!("Report {i} about {d}."),
                    embedding: None,
                });
            }
        }
        validate_corpus(recs, vec![]).unwrap()
    }

    #[test]
    fn plan_maps_each_tier() {
        use RelevanceTier::*;
        let plan = plan_seeding(&[
            assessment("h", High),
            assessment("m", Moderate),
            assessment("p", Potential),
            assessment("i", Irrelevant),
        ]);
        assert_eq!(
            plan.entries,
            vec![("h".into(), RetrievalMode::Global), ("m".into(), RetrievalMode::Local)]
        );
        assert_eq!(plan.deferred, vec![DomainId::from("p")]);
        assert_eq!(plan.excluded, vec![DomainId::from("i")]);
    }

    #[test]
    fn all_irrelevant_has_no_entries() {
        let plan = plan_seeding(&[assessment("a", RelevanceTier::Irrelevant)]);
        assert!(plan.entries.is_empty());
        let r = reg(&[("a", 1)]);
        let (b, c, l) = (ScriptedBackend::wildcard_defaults(), SimClock::new(), CostLedger::new());
        let s = Session::new(&b, &c, &l, Budget::new(10.0, 1000).unwrap());
        let q = Query::new("q", "x").unwrap();
        assert_eq!(
            execute_seeding(&s, &plan, &q, &r, &RetrievalConfig::default()),
            Err(RunError::NoRelevantDomain)
        );
        assert!(l.is_empty());
    }

    #[test]
    fn global_context_clamps_to_domain_size() {
        let r = reg(&[("a", 3)]);
        let (b, c, l) = (ScriptedBackend::wildcard_defaults(), SimClock::new(), CostLedger::new());
        let s = Session::new(&b, &c, &l, Budget::new(10.0, 100_000).unwrap());
        let q = Query::new("q", "about a").unwrap();
        let p = retrieve_global(&s, &q, r.get(&"a".into()).unwrap(), &RetrievalConfig::default()).unwrap();
        assert_eq!(p.mode, RetrievalMode::Global);
        assert_eq!(p.source_report_ids.len(), 3);
        assert_eq!(p.text, "Domain-scoped evidence relevant to the query.");
    }

    #[test]
    fn local_context_picks_most_similar_reports() {
        let mut recs = Vec::new();
        let e = |x: f64| {
            let y = (1.0 - x * x).sqrt();
            Some(vec![x, y])
        };
        // Similarity to [1, 0] decreases with index; r05 and r06 tie.
        for (i, x) in [0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.5, 0.3, 0.2, 0.1].iter().enumerate() {
            recs.push(ReportRecord {
                report_id: format!("r{i:02}"),
                domain_id: "a".into(),
                title: String::new(),
                text: String::new(),
                embedding: e(*x),
            });
        }
        let r = validate_corpus(recs, vec![]).unwrap();
        let d = r.get(&"a".into()).unwrap();
        let q = Query::new("q", "x").unwrap().with_embedding(UnitVector::new(vec![1.0, 0.0]).unwrap());
        let ids: Vec<_> = select_context(&q, d, 3).iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r00", "r01", "r02"]);
        let ids: Vec<_> = select_context(&q, d, 6).iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids[5], "r05");
        let (req, _) = retrieval_request(&q, d, RetrievalMode::Local, &RetrievalConfig::default());
        assert_eq!(req.payload["context_reports"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn failing_domain_does_not_affect_sibling() {
        let r = reg(&[("a", 2), ("b", 2)]);
        let b = ScriptedBackend::from_entries(vec![
            ScriptEntry::when(AgentRole::PartialGenerator, json!({"mode": "global"}), json!({"text": "global evidence"})),
        ])
        .unwrap();
        let (c, l) = (SimClock::new(), CostLedger::new());
        let s = Session::new(&b, &c, &l, Budget::new(10.0, 100_000).unwrap());
        let plan = SeedingPlan {
            entries: vec![("a".into(), RetrievalMode::Global), ("b".into(), RetrievalMode::Local)],
            deferred: vec![],
            excluded: vec![],
        };
        let q = Query::new("q", "x").unwrap();
        let out = execute_seeding(&s, &plan, &q, &r, &RetrievalConfig::default()).unwrap();
        assert_eq!(out.partials.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].domain_id.0, "b");
        assert_eq!(l.len(), 2);
    }

    fn partial(domain: &str, sources: &[&str]) -> PartialAnswer {
        PartialAnswer {
            domain_id: domain.into(),
            mode: RetrievalMode::Global,
            query_text: "q".into(),
            text: format!("evidence from {domain}"),
            source_report_ids: sources.iter().map(|s| s.to_string()).collect(),
            cost: CallCost::default(),
        }
    }

    #[test]
    fn seed_attributions_cover_every_domain() {
        let b = ScriptedBackend::from_entries(vec![ScriptEntry::wildcard(
            AgentRole::Synthesizer,
            json!({"text": "Fused. More.", "attributions": [
                {"claim": "Fused.", "domain_id": "a", "report_ids": ["r1", "bogus"]},
                {"claim": "Made up.", "domain_id": "zzz", "report_ids": []}
            ]}),
        )])
        .unwrap();
        let (c, l) = (SimClock::new(), CostLedger::new());
        let s = Session::new(&b, &c, &l, Budget::new(10.0, 100_000).unwrap());
        let q = Query::new("q", "x").unwrap();
        let seed = synthesize_seed(&s, &q, &[partial("a", &["r1"]), partial("b", &["r9"])]).unwrap();
        assert_eq!(seed.iteration, 0);
        let domains: Vec<_> = seed.attributions.iter().map(|a| a.domain_id.0.as_str()).collect();
        assert_eq!(domains, ["a", "b"]);
        assert_eq!(seed.attributions[0].report_ids, ["r1"]);
        assert_eq!(seed.attributions[1].claim, "Fused.");
    }

    #[test]
    fn synthesis_failure_is_fatal() {
        let b = ScriptedBackend::from_json("[]").unwrap();
        let (c, l) = (SimClock::new(), CostLedger::new());
        let s = Session::new(&b, &c, &l, Budget::new(10.0, 100_000).unwrap());
        let q = Query::new("q", "x").unwrap();
        assert!(matches!(
            synthesize_seed(&s, &q, &[partial("a", &[])]),
            Err(RunError::SynthesisFailed(_))
        ));
    }
}
