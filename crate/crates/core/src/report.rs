//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ledger::{CallRecord, LedgerTotals};
use crate::model::Query;
use crate::pipeline::{RunMode, RunOutcome};
use crate::refinement::{StopReason, StrategyDecision};
use crate::relevance::RelevanceTier;
use crate::seeding::Attribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportQuery {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAnswer {
    pub text: String,
    /// Fusion count of the returned answer (0 = seed).
    pub iteration: u32,
    pub quality: Option<f64>,
    pub attributions: Vec<Attribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for the seed, then one per refinement round.
    pub iteration: usize,
    pub completeness: Option<f64>,
    pub breadth: Option<f64>,
    pub quality: Option<f64>,
    pub decision: StrategyDecision,
    pub gaps: Vec<String>,
    pub followups: Vec<String>,
    /// Half-open range of ledger sequence numbers.
    pub calls: [u64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainCost {
    pub calls: u64,
    pub retrieval_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<RelevanceTier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSection {
    pub total_tokens_in: u64,
    pub total_tokens_out: u64,
    pub total_calls: u64,
    pub retrieval_calls: u64,
    pub wall_seconds: f64,
    pub per_stage: BTreeMap<String, StageCost>,
    pub per_domain: BTreeMap<String, DomainCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub query: ReportQuery,
    pub mode: RunMode,
    pub answer: ReportAnswer,
    /// Trace position of the returned answer: 0 = seed, n = refinement round n.
    pub best_iteration: usize,
    pub stop_reason: Option<StopReason>,
    pub quality_trace: Vec<TraceEntry>,
    pub cost: CostSection,
    pub config_fingerprint: String,
}

fn secs(d: std::time::Duration) -> f64 {
    d.as_secs_f64()
}

/// Builds the report from a finished run and its ledger records.
pub fn run_report(
    query: &Query,
    outcome: &RunOutcome,
    records: &[CallRecord],
    wall_seconds: f64,
    config_fingerprint: &str,
) -> RunReport {
    let totals = LedgerTotals::fold(records);

    let mut per_stage: BTreeMap<String, StageCost> = BTreeMap::new();
    let mut spans: BTreeMap<String, (std::time::Duration, std::time::Duration)> = BTreeMap::new();
    let mut per_domain: BTreeMap<String, DomainCost> = BTreeMap::new();
    for r in records {
        let key = format!("{:?}", r.stage);
        let s = per_stage.entry(key.clone()).or_default();
        s.calls += 1;
        s.tokens_in += r.tokens_in;
        s.tokens_out += r.tokens_out;
        let span = spans.entry(key).or_insert((r.started_at, r.ended_at));
        span.0 = span.0.min(r.started_at);
        span.1 = span.1.max(r.ended_at);
        if let Some(id) = &r.domain_id {
            let d = per_domain.entry(id.to_string()).or_default();
            d.calls += 1;
            d.retrieval_calls += u64::from(r.is_retrieval());
            d.tokens_in += r.tokens_in;
            d.tokens_out += r.tokens_out;
        }
    }
    for (key, (start, end)) in spans {
        if let Some(s) = per_stage.get_mut(&key) {
            s.wall_seconds = secs(end.saturating_sub(start));
        }
    }

    let (best_iteration, stop_reason, quality_trace) = match outcome {
        RunOutcome::Scout(run) => {
            for a in &run.assessments {
                per_domain.entry(a.domain_id.to_string()).or_default().tier = Some(a.tier);
            }
            let entries = run
                .trace
                .iterations
                .iter()
                .enumerate()
                .map(|(i, it)| TraceEntry {
                    iteration: i,
                    completeness: it.report.as_ref().map(|r| r.completeness),
                    breadth: it.report.as_ref().map(|r| r.breadth),
                    quality: it.quality,
                    decision: it.decision,
                    gaps: it.report.as_ref().map(|r| r.gaps.clone()).unwrap_or_default(),
                    followups: it
                        .report
                        .as_ref()
                        .map(|r| r.followups.iter().map(|q| q.text.clone()).collect())
                        .unwrap_or_default(),
                    calls: [it.calls.start, it.calls.end],
                })
                .collect();
            (run.trace.best_index, run.trace.stop_reason, entries)
        }
        RunOutcome::Baseline { .. } => (0, None, Vec::new()),
    };

    let answer = outcome.answer();
    RunReport {
        query: ReportQuery {
            id: query.id.clone(),
            text: query.text.clone(),
        },
        mode: outcome.mode(),
        answer: ReportAnswer {
            text: answer.text.clone(),
            iteration: answer.iteration,
            quality: outcome.trace().and_then(|t| t.best_quality()),
            attributions: answer.attributions.clone(),
        },
        best_iteration,
        stop_reason,
        quality_trace,
        cost: CostSection {
            total_tokens_in: totals.total_tokens_in,
            total_tokens_out: totals.total_tokens_out,
            total_calls: totals.total_calls,
            retrieval_calls: records.iter().filter(|r| r.is_retrieval()).count() as u64,
            wall_seconds,
            per_stage,
            per_domain,
        },
        config_fingerprint: config_fingerprint.to_string(),
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The report without wall-clock fields, for reproducibility checks.
    pub fn fingerprinted_section(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(cost) = v.get_mut("cost").and_then(Value::as_object_mut) {
            cost.remove("wall_seconds");
            if let Some(stages) = cost.get_mut("per_stage").and_then(Value::as_object_mut) {
                for stage in stages.values_mut() {
                    if let Some(s) = stage.as_object_mut() {
                        s.remove("wall_seconds");
                    }
                }
            }
        }
        v
    }

    pub fn fingerprinted_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.fingerprinted_section()).expect("report serializes")
    }

    /// Writes the report via a temporary file renamed into place.
    pub fn write_atomic(&self, path: &Path) -> std::io::Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_json().as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}
