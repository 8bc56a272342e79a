//! Reference retrieval policies run on the same registry, backend and ledger.
//!
//! Centralized modes pool every report into one virtual domain. The DRIFT
//! pattern is one global search followed by two rounds of three local
//! follow-up searches and a synthesis; the decentralized variant runs that
//! pipeline per domain (in lockstep across domains) and then fuses the
//! per-domain answers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{AgentRole, QualityBody, SynthesisBody};
use crate::dispatch::{CallSpec, Gate, Session};
use crate::error::RunError;
use crate::ledger::Stage;
use crate::model::{CommunityReport, CostModel, DomainId, DomainProfile, DomainRegistry, Query};
use crate::refinement::quality_request;
use crate::seeding::{
    reconcile_attributions, run_retrievals, synthesis_request, CallCost, PartialAnswer, RetrievalBatch, RetrievalConfig,
    RetrievalMode, RetrievalTask, SynthesizedAnswer,
};

pub const MERGED_DOMAIN_ID: &str = "__merged__";
pub const DRIFT_ROUNDS: usize = 2;
pub const DRIFT_FOLLOWUPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    CentralLocal,
    CentralGlobal,
    DriftCentral,
    DriftDecentral,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 4] = [
        BaselineMode::CentralLocal,
        BaselineMode::CentralGlobal,
        BaselineMode::DriftCentral,
        BaselineMode::DriftDecentral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::CentralLocal => "central-local",
            BaselineMode::CentralGlobal => "central-global",
            BaselineMode::DriftCentral => "drift-central",
            BaselineMode::DriftDecentral => "drift-decentral",
        }
    }
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "central-local" | "local" => Ok(BaselineMode::CentralLocal),
            "central-global" | "global" => Ok(BaselineMode::CentralGlobal),
            "drift-central" | "drift-c" => Ok(BaselineMode::DriftCentral),
            "drift-decentral" | "drift-dec" => Ok(BaselineMode::DriftDecentral),
            other => Err(format!("unknown baseline mode {other:?}")),
        }
    }
}

/// Pools every report into one domain. Report ids are namespaced as
/// `<domain>/<report>` so they stay unique.
pub fn merged_domain(registry: &DomainRegistry) -> DomainProfile {
    let id = DomainId::new(MERGED_DOMAIN_ID);
    let reports = registry
        .domains()
        .flat_map(|d| {
            d.reports.iter().map(|r| CommunityReport {
                id: format!("{}/{}", d.id, r.id),
                domain_id: id.clone(),
                title: r.title.clone(),
                text: r.text.clone(),
                embedding: r.embedding.clone(),
            })
        })
        .collect();
    let summary_text = registry
        .domains()
        .map(|d| d.summary_text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    DomainProfile {
        id,
        name: "merged corpus".into(),
        reports,
        summary_text,
        embedding: None,
        cost_model: CostModel::default(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub mode: BaselineMode,
    pub answer: SynthesizedAnswer,
    pub failures: usize,
}

fn halted(h: crate::dispatch::Halt, what: &str) -> RunError {
    RunError::BudgetExhaustedBeforeSeed(format!("{h:?} during {what}"))
}

fn check(batch: &RetrievalBatch, what: &str) -> Result<(), RunError> {
    match batch.halted {
        Some(h) => Err(halted(h, what)),
        None => Ok(()),
    }
}

fn answer_from_partial(p: &PartialAnswer) -> SynthesizedAnswer {
    SynthesizedAnswer {
        text: p.text.clone(),
        attributions: vec![crate::seeding::Attribution {
            claim: p.text.clone(),
            domain_id: p.domain_id.clone(),
            report_ids: p.source_report_ids.clone(),
        }],
        iteration: 0,
        quality: None,
    }
}

fn single_retrieval(
    session: &Session<'_>,
    query: &Query,
    domain: &DomainProfile,
    mode: RetrievalMode,
    config: &RetrievalConfig,
) -> Result<SynthesizedAnswer, RunError> {
    let task = RetrievalTask {
        domain,
        query: query.clone(),
        mode,
    };
    let batch = run_retrievals(session, Stage::Baseline, &[task], config, Gate::Open);
    check(&batch, "retrieval")?;
    match batch.partials.first() {
        Some(p) => Ok(answer_from_partial(p)),
        None => Err(RunError::SynthesisFailed(
            batch.failures.first().map(|f| f.reason.clone()).unwrap_or_default(),
        )),
    }
}

/// Fallback follow-ups when the assessor supplies fewer than three.
pub fn generic_followups(query: &Query) -> [String; DRIFT_FOLLOWUPS] {
    [
        format!("Key facts: {}", query.text),
        format!("Concrete examples: {}", query.text),
        format!("Comparisons and contrasts: {}", query.text),
    ]
}

/// Per-domain DRIFT state carried through the lockstep rounds.
struct DriftLane<'d> {
    domain: &'d DomainProfile,
    partials: Vec<PartialAnswer>,
}

impl DriftLane<'_> {
    fn working_answer(&self) -> SynthesizedAnswer {
        let text = self
            .partials
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        SynthesizedAnswer {
            text: if text.trim().is_empty() { "(no evidence yet)".into() } else { text },
            attributions: vec![],
            iteration: 0,
            quality: None,
        }
    }
}

/// Runs DRIFT over `domains` in lockstep and returns one answer per domain.
fn drift(
    session: &Session<'_>,
    query: &Query,
    domains: &[&DomainProfile],
    config: &RetrievalConfig,
    failures: &mut usize,
) -> Result<Vec<(DomainId, SynthesizedAnswer)>, RunError> {
    let mut lanes: Vec<DriftLane<'_>> = domains
        .iter()
        .map(|d| DriftLane {
            domain: d,
            partials: Vec::new(),
        })
        .collect();

    let primers: Vec<RetrievalTask<'_>> = lanes
        .iter()
        .map(|l| RetrievalTask {
            domain: l.domain,
            query: query.clone(),
            mode: RetrievalMode::Global,
        })
        .collect();
    let batch = run_retrievals(session, Stage::Baseline, &primers, config, Gate::Open);
    check(&batch, "primer search")?;
    *failures += batch.failures.len();
    distribute(&mut lanes, batch.partials);

    for round in 0..DRIFT_ROUNDS {
        let calls = lanes
            .iter()
            .map(|l| CallSpec::agent(Stage::Baseline, quality_request(query, &l.working_answer())))
            .collect();
        let assessed = session.fan_out(calls, Gate::Open);
        if let Some(h) = assessed.halted {
            return Err(halted(h, "follow-up generation"));
        }
        let mut tasks = Vec::new();
        for (lane, outcome) in lanes.iter().zip(assessed.outcomes) {
            let suggested: Vec<String> = outcome
                .into_iter()
                .flatten()
                .filter_map(|r| r.decode::<QualityBody>(AgentRole::QualityAssessor).ok())
                .flat_map(|b| b.followups)
                .filter(|f| !f.trim().is_empty())
                .collect();
            let mut followups: Vec<String> = suggested.into_iter().take(DRIFT_FOLLOWUPS).collect();
            for g in generic_followups(query) {
                if followups.len() == DRIFT_FOLLOWUPS {
                    break;
                }
                followups.push(g);
            }
            for (k, text) in followups.into_iter().enumerate() {
                tasks.push(RetrievalTask {
                    domain: lane.domain,
                    query: Query {
                        id: format!("{}-drift{}-{}", query.id, round, k),
                        text,
                        embedding: None,
                    },
                    mode: RetrievalMode::Local,
                });
            }
        }
        let batch = run_retrievals(session, Stage::Baseline, &tasks, config, Gate::Open);
        check(&batch, "follow-up search")?;
        *failures += batch.failures.len();
        distribute(&mut lanes, batch.partials);
    }

    let calls = lanes
        .iter()
        .map(|l| CallSpec::agent(Stage::Baseline, synthesis_request(query, None, &l.partials)))
        .collect();
    let synthesized = session.fan_out(calls, Gate::Open);
    if let Some(h) = synthesized.halted {
        return Err(halted(h, "per-domain synthesis"));
    }
    let mut out = Vec::new();
    for (lane, outcome) in lanes.iter().zip(synthesized.outcomes) {
        let body = outcome
            .into_iter()
            .flatten()
            .find_map(|r| r.decode::<SynthesisBody>(AgentRole::Synthesizer).ok());
        match body {
            Some(body) => out.push((
                lane.domain.id.clone(),
                SynthesizedAnswer {
                    attributions: reconcile_attributions(&body, None, &lane.partials),
                    text: body.text,
                    iteration: 0,
                    quality: None,
                },
            )),
            None => *failures += 1,
        }
    }
    Ok(out)
}

fn distribute(lanes: &mut [DriftLane<'_>], partials: Vec<PartialAnswer>) {
    for p in partials {
        if let Some(lane) = lanes.iter_mut().find(|l| l.domain.id == p.domain_id) {
            lane.partials.push(p);
        }
    }
}

/// Runs one baseline policy end to end.
pub fn run_baseline(
    mode: BaselineMode,
    session: &Session<'_>,
    query: &Query,
    registry: &DomainRegistry,
    config: &RetrievalConfig,
) -> Result<BaselineRun, RunError> {
    if registry.is_empty() {
        return Err(crate::error::SignalError::EmptyRegistry.into());
    }
    let mut failures = 0;
    let answer = match mode {
        BaselineMode::CentralLocal => {
            single_retrieval(session, query, &merged_domain(registry), RetrievalMode::Local, config)?
        }
        BaselineMode::CentralGlobal => {
            single_retrieval(session, query, &merged_domain(registry), RetrievalMode::Global, config)?
        }
        BaselineMode::DriftCentral => {
            let merged = merged_domain(registry);
            drift(session, query, &[&merged], config, &mut failures)?
                .pop()
                .map(|(_, a)| a)
                .ok_or_else(|| RunError::SynthesisFailed("drift synthesis failed".into()))?
        }
        BaselineMode::DriftDecentral => {
            let domains: Vec<&DomainProfile> = registry.domains().collect();
            let per_domain = drift(session, query, &domains, config, &mut failures)?;
            if per_domain.is_empty() {
                return Err(RunError::SynthesisFailed("every per-domain synthesis failed".into()));
            }
            let partials: Vec<PartialAnswer> = per_domain
                .iter()
                .map(|(id, a)| PartialAnswer {
                    domain_id: id.clone(),
                    mode: RetrievalMode::Global,
                    query_text: query.text.clone(),
                    text: a.text.clone(),
                    source_report_ids: a.attributions.iter().flat_map(|x| x.report_ids.clone()).collect(),
                    cost: CallCost::default(),
                })
                .collect();
            let spec = CallSpec::agent(Stage::Baseline, synthesis_request(query, None, &partials));
            let body = session
                .call(spec, Gate::Open)
                .map_err(|h| halted(h, "final synthesis"))?
                .and_then(|r| r.decode::<SynthesisBody>(AgentRole::Synthesizer))
                .map_err(|e| RunError::SynthesisFailed(e.to_string()))?;
            SynthesizedAnswer {
                attributions: reconcile_attributions(&body, None, &partials),
                text: body.text,
                iteration: 0,
                quality: None,
            }
        }
    };
    Ok(BaselineRun { mode, answer, failures })
}
