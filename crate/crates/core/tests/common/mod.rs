#![allow(dead_code)]

use std::path::{Path, PathBuf};

use meshrag_core::backend::{AgentRole, ScriptEntry, ScriptedBackend};
use meshrag_core::model::{load_corpus, validate_corpus, DomainRecord, ReportRecord};
use meshrag_core::relevance::RelevanceTier;
use meshrag_core::DomainRegistry;
use serde_json::json;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case_study")
}

pub fn case_study_registry() -> DomainRegistry {
    let f = fixtures();
    load_corpus(&f.join("corpus.jsonl"), Some(&f.join("domains.jsonl"))).unwrap()
}

pub fn case_study_backend() -> ScriptedBackend {
    ScriptedBackend::load_script(&fixtures().join("script.json")).unwrap()
}

pub fn domain_name(i: usize) -> String {
    format!("d{i:02}")
}

/// One domain per entry: (report count, latency ms, history).
pub fn registry(domains: &[(usize, u64, Vec<f64>)]) -> DomainRegistry {
    let mut reports = Vec::new();
    let mut sidecar = Vec::new();
    for (i, (count, latency, history)) in domains.iter().enumerate() {
        let id = domain_name(i);
        for r in 0..*count {
            reports.push(ReportRecord {
                report_id: format!("r{r:03}"),
                domain_id: id.clone(),
                title: format!("topic {r}"),
                text: format!("Domain {i} report {r} about trade and policy."),
                embedding: None,
            });
        }
        sidecar.push(DomainRecord {
            domain_id: id.clone(),
            name: Some(id),
            summary: None,
            embedding: None,
            latency_ms: Some(*latency),
            token_overhead: None,
            history: (!history.is_empty()).then(|| history.clone()),
        });
    }
    validate_corpus(reports, sidecar).unwrap()
}

pub fn uniform_registry(m: usize, reports: usize) -> DomainRegistry {
    registry(&vec![(reports, 0, vec![]); m])
}

pub fn tier_str(t: RelevanceTier) -> &'static str {
    match t {
        RelevanceTier::High => "HIGH",
        RelevanceTier::Moderate => "MODERATE",
        RelevanceTier::Potential => "POTENTIAL",
        RelevanceTier::Irrelevant => "IRRELEVANT",
    }
}

pub fn relevance_entry(name: &str, tier: RelevanceTier, score: f64, elapsed_ms: u64) -> ScriptEntry {
    ScriptEntry::when(
        AgentRole::RelevanceAssessor,
        json!({"domain_name": name}),
        json!({"tier": tier_str(tier), "score": score, "rationale": "scripted"}),
    )
    .with_elapsed_ms(elapsed_ms)
}

/// Per-domain tiers with fixed-text retrieval and synthesis, plus the given
/// quality reply for every answer.
pub fn tiered_backend(
    tiers: &[RelevanceTier],
    quality: serde_json::Value,
    elapsed_ms: [u64; 4],
) -> ScriptedBackend {
    let mut entries: Vec<ScriptEntry> = tiers
        .iter()
        .enumerate()
        .map(|(i, t)| relevance_entry(&domain_name(i), *t, 0.9 - i as f64 * 0.001, elapsed_ms[0]))
        .collect();
    entries.push(
        ScriptEntry::wildcard(AgentRole::PartialGenerator, json!({"text": "evidence"})).with_elapsed_ms(elapsed_ms[1]),
    );
    entries.push(
        ScriptEntry::wildcard(AgentRole::Synthesizer, json!({"text": "fused answer"})).with_elapsed_ms(elapsed_ms[2]),
    );
    entries.push(ScriptEntry::wildcard(AgentRole::QualityAssessor, quality).with_elapsed_ms(elapsed_ms[3]));
    ScriptedBackend::from_entries(entries).unwrap()
}

pub const TIERS: [RelevanceTier; 4] = [
    RelevanceTier::High,
    RelevanceTier::Moderate,
    RelevanceTier::Potential,
    RelevanceTier::Irrelevant,
];
