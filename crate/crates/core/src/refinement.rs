//! Quality-guided refinement of the seed answer.
//!
//! Each round assesses the current answer, checks the termination rules,
//! picks a strategy from completeness, breadth and remaining time, runs
//! local retrieval against the chosen targets, and fuses the new evidence.
//! Every assessed answer is kept; the best one (earliest on ties) is returned
//! no matter how later rounds turn out.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{AgentRequest, AgentRole, QualityBody, SynthesisBody};
use crate::dispatch::{CallSpec, Gate, Halt, Session};
use crate::error::BackendError;
use crate::ledger::Stage;
use crate::model::{DomainId, DomainRegistry, Query};
use crate::relevance::{RelevanceAssessment, RelevanceTier};
use crate::seeding::{
    reconcile_attributions, run_retrievals, synthesis_request, PartialAnswer, RetrievalBatch, RetrievalConfig,
    RetrievalMode, RetrievalTask, SynthesizedAnswer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub completeness: f64,
    pub breadth: f64,
    pub gaps: Vec<String>,
    pub followups: Vec<Query>,
}

impl QualityReport {
    pub fn overall(&self) -> f64 {
        overall_quality(self)
    }
}

/// Mean of completeness and breadth.
pub fn overall_quality(report: &QualityReport) -> f64 {
    0.5 * (report.completeness + report.breadth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyDecision {
    Depth,
    Breadth,
    Hybrid,
    Stop,
}

/// Strategy-table thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyThresholds {
    /// Completeness below this calls for depth.
    pub completeness: f64,
    /// Breadth below this calls for breadth.
    pub breadth: f64,
    pub depth_secs: f64,
    pub breadth_secs: f64,
    pub hybrid_secs: f64,
}

impl Default for StrategyThresholds {
    fn default() -> Self {
        Self {
            completeness: 0.75,
            breadth: 0.70,
            depth_secs: 15.0,
            breadth_secs: 10.0,
            hybrid_secs: 20.0,
        }
    }
}

/// Picks the refinement mode, most specific condition first:
/// Hybrid, then Depth, then Breadth, else Stop.
pub fn select_strategy(report: &QualityReport, remaining_secs: f64, t: &StrategyThresholds) -> StrategyDecision {
    decide(report.completeness, report.breadth, remaining_secs, t)
}

pub fn decide(completeness: f64, breadth: f64, remaining_secs: f64, t: &StrategyThresholds) -> StrategyDecision {
    let incomplete = completeness < t.completeness;
    let narrow = breadth < t.breadth;
    if incomplete && narrow && remaining_secs > t.hybrid_secs {
        StrategyDecision::Hybrid
    } else if incomplete && remaining_secs > t.depth_secs {
        StrategyDecision::Depth
    } else if narrow && remaining_secs > t.breadth_secs {
        StrategyDecision::Breadth
    } else {
        StrategyDecision::Stop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    QualityThreshold,
    TimeDepleted,
    Stagnation,
    StrategyStop,
    IterationCap,
    TokenBudget,
}

/// Loop-level knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminationRules {
    pub quality_threshold: f64,
    /// No call starts with less than this many seconds left.
    pub min_remaining_secs: f64,
    pub epsilon: f64,
    /// Maximum number of refinement rounds after the seed.
    pub iteration_cap: usize,
}

impl Default for TerminationRules {
    fn default() -> Self {
        Self {
            quality_threshold: 0.85,
            min_remaining_secs: 5.0,
            epsilon: 0.01,
            iteration_cap: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIteration {
    pub answer: SynthesizedAnswer,
    /// `None` when the answer could not be assessed (budget or agent failure).
    pub report: Option<QualityReport>,
    pub decision: StrategyDecision,
    pub quality: Option<f64>,
    /// Ledger sequence numbers of the Stage III calls belonging to this iteration.
    pub calls: Range<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub iterations: Vec<TraceIteration>,
    pub best_index: usize,
    pub stop_reason: Option<StopReason>,
}

impl Default for RefinementTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl RefinementTrace {
    pub fn new() -> Self {
        Self {
            iterations: Vec::new(),
            best_index: 0,
            stop_reason: None,
        }
    }

    /// Appends an iteration, moving `best_index` only on strict improvement.
    pub fn push(&mut self, iteration: TraceIteration) {
        let q = iteration.quality;
        self.iterations.push(iteration);
        let idx = self.iterations.len() - 1;
        let best = self.iterations[self.best_index].quality;
        match (q, best) {
            (Some(q), Some(b)) if q > b => self.best_index = idx,
            (Some(_), None) => self.best_index = idx,
            _ => {}
        }
    }

    pub fn best(&self) -> &TraceIteration {
        &self.iterations[self.best_index]
    }

    pub fn best_quality(&self) -> Option<f64> {
        self.iterations.get(self.best_index).and_then(|i| i.quality)
    }

    pub fn qualities(&self) -> Vec<Option<f64>> {
        self.iterations.iter().map(|i| i.quality).collect()
    }

    pub fn rounds(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }
}

/// First applicable stop reason, checked in order: quality threshold, time,
/// stagnation, iteration cap.
pub fn should_terminate(trace: &RefinementTrace, remaining_secs: f64, rules: &TerminationRules) -> Option<StopReason> {
    let latest = trace.iterations.last()?.quality;
    if latest.is_some_and(|q| q >= rules.quality_threshold) {
        return Some(StopReason::QualityThreshold);
    }
    if remaining_secs < rules.min_remaining_secs {
        return Some(StopReason::TimeDepleted);
    }
    if let [.., prev, last] = trace.iterations.as_slice() {
        if let (Some(p), Some(l)) = (prev.quality, last.quality) {
            if l - p < rules.epsilon {
                return Some(StopReason::Stagnation);
            }
        }
    }
    if trace.rounds() >= rules.iteration_cap {
        return Some(StopReason::IterationCap);
    }
    None
}

fn normalize_followup(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Clamps scores into [0, 1], deduplicates follow-ups, and caps them.
/// When completeness is short with known gaps but no follow-ups, the gaps
/// themselves become the follow-up questions.
pub fn quality_from_body(body: QualityBody, query: &Query, followup_cap: usize) -> QualityReport {
    let completeness = body.completeness.clamp(0.0, 1.0);
    let breadth = body.breadth.clamp(0.0, 1.0);
    let gaps: Vec<String> = body
        .gaps
        .into_iter()
        .map(|g| g.trim().to_string())
        .filter(|g| !g.is_empty())
        .collect();
    let mut raw = body.followups;
    if raw.iter().all(|f| f.trim().is_empty()) && completeness < 1.0 && !gaps.is_empty() {
        raw = gaps.clone();
    }
    let mut seen = BTreeSet::new();
    let followups = raw
        .into_iter()
        .map(|f| f.trim().to_string())
        .filter(|f| !f.is_empty() && seen.insert(normalize_followup(f)))
        .take(followup_cap)
        .enumerate()
        .map(|(i, text)| Query {
            id: format!("{}-f{}", query.id, i),
            text,
            embedding: None,
        })
        .collect();
    QualityReport {
        completeness,
        breadth,
        gaps,
        followups,
    }
}

pub fn quality_request(query: &Query, answer: &SynthesizedAnswer) -> AgentRequest {
    AgentRequest::new(AgentRole::QualityAssessor, json!({"query": query.text, "answer": answer.text}))
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssessError {
    Halted(Halt),
    Failed(BackendError),
}

/// Asks the quality agent to grade `answer`.
pub fn assess_quality(
    session: &Session<'_>,
    answer: &SynthesizedAnswer,
    query: &Query,
    stage: Stage,
    gate: Gate,
    followup_cap: usize,
) -> Result<QualityReport, AssessError> {
    let spec = CallSpec::agent(stage, quality_request(query, answer));
    let response = session.call(spec, gate).map_err(AssessError::Halted)?;
    let body: QualityBody = response
        .and_then(|r| r.decode(AgentRole::QualityAssessor))
        .map_err(AssessError::Failed)?;
    Ok(quality_from_body(body, query, followup_cap))
}

/// HIGH domains for depth and the not-yet-activated POTENTIAL pool for breadth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementTargets {
    pub high: Vec<DomainId>,
    pub potential: Vec<DomainId>,
    pub activated: Vec<DomainId>,
}

impl RefinementTargets {
    pub fn from_assessments(assessments: &[RelevanceAssessment]) -> Self {
        let pick = |tier| {
            assessments
                .iter()
                .filter(|a| a.tier == tier)
                .map(|a| a.domain_id.clone())
                .collect()
        };
        Self {
            high: pick(RelevanceTier::High),
            potential: pick(RelevanceTier::Potential),
            activated: Vec::new(),
        }
    }

    fn activate(&mut self, ids: &[DomainId]) {
        for id in ids {
            if let Some(pos) = self.potential.iter().position(|p| p == id) {
                self.potential.remove(pos);
                self.activated.push(id.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoTargets;

/// Local retrieval for the chosen strategy. Depth sends every follow-up to
/// every HIGH domain; Breadth sends the original query to every remaining
/// POTENTIAL domain and activates it; Hybrid dispatches both together.
pub fn execute_refinement(
    session: &Session<'_>,
    decision: StrategyDecision,
    followups: &[Query],
    targets: &mut RefinementTargets,
    query: &Query,
    registry: &DomainRegistry,
    config: &RetrievalConfig,
    gate: Gate,
) -> Result<RetrievalBatch, NoTargets> {
    let (depth, breadth) = match decision {
        StrategyDecision::Depth => (true, false),
        StrategyDecision::Breadth => (false, true),
        StrategyDecision::Hybrid => (true, true),
        StrategyDecision::Stop => return Err(NoTargets),
    };
    let mut tasks: Vec<RetrievalTask<'_>> = Vec::new();
    if depth {
        for f in followups {
            for id in &targets.high {
                if let Some(domain) = registry.get(id) {
                    tasks.push(RetrievalTask {
                        domain,
                        query: f.clone(),
                        mode: RetrievalMode::Local,
                    });
                }
            }
        }
    }
    let breadth_start = tasks.len();
    if breadth {
        for id in &targets.potential {
            if let Some(domain) = registry.get(id) {
                tasks.push(RetrievalTask {
                    domain,
                    query: query.clone(),
                    mode: RetrievalMode::Local,
                });
            }
        }
    }
    if tasks.is_empty() {
        return Err(NoTargets);
    }
    let batch = run_retrievals(session, Stage::Refinement, &tasks, config, gate);
    // Only breadth targets that actually went out count as activated.
    let started = batch.dispatched.len();
    let activated: Vec<DomainId> = tasks
        .iter()
        .enumerate()
        .filter(|(i, _)| *i >= breadth_start && *i < started)
        .map(|(_, t)| t.domain.id.clone())
        .collect();
    targets.activate(&activated);
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuseOutcome {
    Fused(SynthesizedAnswer),
    /// Nothing to fuse, synthesis failed, or the budget closed: the current
    /// answer stands and the round counts as no improvement.
    Unchanged(Option<String>),
}

/// Merges new evidence into the current answer.
pub fn fuse(
    session: &Session<'_>,
    current: &SynthesizedAnswer,
    new_partials: &[PartialAnswer],
    query: &Query,
    gate: Gate,
) -> FuseOutcome {
    if new_partials.is_empty() {
        return FuseOutcome::Unchanged(None);
    }
    let spec = CallSpec::agent(Stage::Refinement, synthesis_request(query, Some(current), new_partials));
    let body = match session.call(spec, gate) {
        Err(h) => return FuseOutcome::Unchanged(Some(format!("{h:?}"))),
        Ok(r) => r.and_then(|r| r.decode::<SynthesisBody>(AgentRole::Synthesizer)),
    };
    match body {
        Ok(body) => FuseOutcome::Fused(SynthesizedAnswer {
            attributions: reconcile_attributions(&body, Some(current), new_partials),
            text: body.text,
            iteration: current.iteration + 1,
            quality: None,
        }),
        Err(e) => FuseOutcome::Unchanged(Some(e.to_string())),
    }
}

/// Everything the loop needs besides the session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub strategy: StrategyThresholds,
    pub termination: TerminationRules,
    pub retrieval: RetrievalConfig,
    pub followup_cap: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyThresholds::default(),
            termination: TerminationRules::default(),
            retrieval: RetrievalConfig::default(),
            followup_cap: 5,
        }
    }
}

fn halt_reason(h: Halt) -> StopReason {
    match h {
        Halt::TimeDepleted => StopReason::TimeDepleted,
        Halt::TokenBudgetExceeded => StopReason::TokenBudget,
    }
}

/// Runs refinement rounds from `seed` until a stop condition fires.
pub fn run_refinement_loop(
    session: &Session<'_>,
    seed: SynthesizedAnswer,
    query: &Query,
    assessments: &[RelevanceAssessment],
    registry: &DomainRegistry,
    config: &RefinementConfig,
) -> (RefinementTrace, RefinementTargets) {
    let gate = Gate::Reserve(config.termination.min_remaining_secs);
    let mut targets = RefinementTargets::from_assessments(assessments);
    let mut trace = RefinementTrace::new();
    let mut current = seed;
    let mut reused: Option<QualityReport> = None;
    let mut slice_start = session.ledger.len();

    let stop = loop {
        let report = match reused.take() {
            Some(r) => Ok(r),
            None => assess_quality(session, &current, query, Stage::Refinement, gate, config.followup_cap),
        };
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                let end = session.ledger.len();
                trace.push(TraceIteration {
                    answer: current.clone(),
                    report: None,
                    decision: StrategyDecision::Stop,
                    quality: None,
                    calls: slice_start..end,
                });
                break match e {
                    AssessError::Halted(h) => halt_reason(h),
                    AssessError::Failed(_) => StopReason::StrategyStop,
                };
            }
        };
        let quality = overall_quality(&report);
        current.quality = Some(report.clone());
        let end = session.ledger.len();
        trace.push(TraceIteration {
            answer: current.clone(),
            report: Some(report.clone()),
            decision: StrategyDecision::Stop,
            quality: Some(quality),
            calls: slice_start..end,
        });
        slice_start = end;

        let remaining = session.remaining();
        if let Some(reason) = should_terminate(&trace, remaining, &config.termination) {
            break reason;
        }
        let decision = select_strategy(&report, remaining, &config.strategy);
        trace.iterations.last_mut().expect("just pushed").decision = decision;
        if decision == StrategyDecision::Stop {
            break StopReason::StrategyStop;
        }
        if let Some(h) = session.blocked(gate) {
            break halt_reason(h);
        }

        let batch = match execute_refinement(
            session,
            decision,
            &report.followups,
            &mut targets,
            query,
            registry,
            &config.retrieval,
            gate,
        ) {
            Ok(b) => b,
            Err(NoTargets) => break StopReason::StrategyStop,
        };
        if let Some(h) = batch.halted {
            break halt_reason(h);
        }
        match fuse(session, &current, &batch.partials, query, gate) {
            FuseOutcome::Fused(next) => current = next,
            FuseOutcome::Unchanged(_) => {
                if let Some(h) = session.blocked(gate) {
                    break halt_reason(h);
                }
                reused = Some(report);
            }
        }
    };

    // Calls from an interrupted round belong to the last recorded iteration.
    let end = session.ledger.len();
    if let Some(last) = trace.iterations.last_mut() {
        last.calls.end = end;
    }
    trace.stop_reason = Some(stop);
    (trace, targets)
}
