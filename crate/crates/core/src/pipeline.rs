//! End-to-end query execution for every mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineMode};
use crate::dispatch::Session;
use crate::error::RunError;
use crate::model::{DomainRegistry, Query};
use crate::refinement::{run_refinement_loop, RefinementConfig, RefinementTargets, RefinementTrace};
use crate::relevance::{rank_domains, CompositeWeights, RelevanceAssessment};
use crate::seeding::{execute_seeding, plan_seeding, synthesize_seed, RetrievalFailure, SeedingPlan, SynthesizedAnswer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunMode {
    Scout,
    Baseline(BaselineMode),
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Scout => "scout",
            RunMode::Baseline(b) => b.as_str(),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "scout" {
            return Ok(RunMode::Scout);
        }
        s.parse().map(RunMode::Baseline)
    }
}

impl TryFrom<String> for RunMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RunMode> for String {
    fn from(m: RunMode) -> String {
        m.as_str().to_string()
    }
}

/// Knobs for a scout run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoutConfig {
    pub weights: CompositeWeights,
    pub refinement: RefinementConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoutRun {
    pub assessments: Vec<RelevanceAssessment>,
    pub plan: SeedingPlan,
    pub seeding_failures: Vec<RetrievalFailure>,
    pub trace: RefinementTrace,
    pub targets: RefinementTargets,
}

impl ScoutRun {
    pub fn answer(&self) -> &SynthesizedAnswer {
        &self.trace.best().answer
    }
}

/// Relevance ranking, seeding, then refinement. The registry's history is
/// updated with the returned quality for every domain the answer cites.
pub fn run_scout(
    session: &Session<'_>,
    query: &Query,
    registry: &mut DomainRegistry,
    config: &ScoutConfig,
) -> Result<ScoutRun, RunError> {
    let assessments = rank_domains(session, query, registry, &config.weights)?;
    let plan = plan_seeding(&assessments);
    let seeded = execute_seeding(session, &plan, query, registry, &config.refinement.retrieval)?;
    let seed = synthesize_seed(session, query, &seeded.partials)?;
    let (trace, targets) = run_refinement_loop(session, seed, query, &assessments, registry, &config.refinement);
    if let Some(q) = trace.best_quality() {
        let cited = trace.best().answer.contributing_domains();
        registry.record_quality(cited.iter(), q)?;
    }
    Ok(ScoutRun {
        assessments,
        plan,
        seeding_failures: seeded.failures,
        trace,
        targets,
    })
}

/// Result of one query in any mode.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Scout(Box<ScoutRun>),
    Baseline {
        mode: BaselineMode,
        answer: SynthesizedAnswer,
    },
}

impl RunOutcome {
    pub fn mode(&self) -> RunMode {
        match self {
            RunOutcome::Scout(_) => RunMode::Scout,
            RunOutcome::Baseline { mode, .. } => RunMode::Baseline(*mode),
        }
    }

    pub fn answer(&self) -> &SynthesizedAnswer {
        match self {
            RunOutcome::Scout(run) => run.answer(),
            RunOutcome::Baseline { answer, .. } => answer,
        }
    }

    pub fn trace(&self) -> Option<&RefinementTrace> {
        match self {
            RunOutcome::Scout(run) => Some(&run.trace),
            RunOutcome::Baseline { .. } => None,
        }
    }
}

pub fn run_mode(
    mode: RunMode,
    session: &Session<'_>,
    query: &Query,
    registry: &mut DomainRegistry,
    config: &ScoutConfig,
) -> Result<RunOutcome, RunError> {
    match mode {
        RunMode::Scout => run_scout(session, query, registry, config).map(|r| RunOutcome::Scout(Box::new(r))),
        RunMode::Baseline(b) => run_baseline(b, session, query, registry, &config.refinement.retrieval)
            .map(|r| RunOutcome::Baseline { mode: b, answer: r.answer }),
    }
}
