//! Shared domain types, the domain registry, and corpus validation.
//!
//! A corpus is a newline-delimited file of community report records, one JSON
//! object per line. An optional sidecar file carries per-domain metadata
//! (display name, summary, embedding, simulated call cost, quality history).
//! Domains without a sidecar entry get a summary built from the first sentence
//! of each report and a zero cost model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// Tolerance for the unit-norm check on supplied embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Identifier of a knowledge domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl DomainId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A dense vector whose L2 norm is 1 within [`UNIT_NORM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Accepts `values` only if it is non-empty and already unit-norm.
    pub fn new(values: Vec<f64>) -> Result<Self, String> {
        if values.is_empty() {
            return Err("embedding is empty".to_string());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err("embedding has non-finite components".to_string());
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(format!("embedding norm {norm} is not within {UNIT_NORM_TOLERANCE} of 1"));
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit length. Returns `None` for the zero vector.
    pub fn normalized(values: Vec<f64>) -> Option<Self> {
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = String;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A natural-language query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<UnitVector>,
}

impl Query {
    /// Builds a query, rejecting text that is empty after trimming.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        Ok(Self {
            id: id.into(),
            text,
            embedding: None,
        })
    }

    pub fn with_embedding(mut self, embedding: UnitVector) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// One prebuilt community report: the unit of retrievable evidence inside a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub id: String,
    pub domain_id: DomainId,
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<UnitVector>,
}

/// Simulated per-call cost of talking to a domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub latency_ms: u64,
    pub token_overhead: u64,
}

/// One independent knowledge domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub id: DomainId,
    pub name: String,
    pub reports: Vec<CommunityReport>,
    pub summary_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<UnitVector>,
    pub cost_model: CostModel,
}

impl DomainProfile {
    pub fn report_count(&self) -> usize {
        self.reports.len()
    }

    pub fn owns_report(&self, report_id: &str) -> bool {
        self.reports.iter().any(|r| r.id == report_id)
    }
}

/// Time and token limits for one query run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_time_secs: f64,
    pub max_tokens: u64,
}

impl Budget {
    pub fn new(max_time_secs: f64, max_tokens: u64) -> Result<Self, CorpusError> {
        if !(max_time_secs.is_finite() && max_time_secs > 0.0) || max_tokens == 0 {
            return Err(CorpusError::InvalidBudget {
                max_time_secs,
                max_tokens,
            });
        }
        Ok(Self {
            max_time_secs,
            max_tokens,
        })
    }
}

/// All registered domains plus their per-domain quality history.
///
/// Immutable during a query. History is only appended between queries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainRegistry {
    domains: BTreeMap<DomainId, DomainProfile>,
    history: BTreeMap<DomainId, Vec<f64>>,
}

impl DomainRegistry {
    /// Iterates domains in ascending id order.
    pub fn domains(&self) -> impl ExactSizeIterator<Item = &DomainProfile> {
        self.domains.values()
    }

    pub fn domain_ids(&self) -> impl ExactSizeIterator<Item = &DomainId> {
        self.domains.keys()
    }

    pub fn get(&self, id: &DomainId) -> Option<&DomainProfile> {
        self.domains.get(id)
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn history(&self, id: &DomainId) -> Option<&[f64]> {
        if !self.domains.contains_key(id) {
            return None;
        }
        Some(self.history.get(id).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Appends a quality score to each listed domain's history.
    pub fn record_quality<'a>(
        &mut self,
        ids: impl IntoIterator<Item = &'a DomainId>,
        quality: f64,
    ) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(CorpusError::HistoryOutOfRange {
                domain_id: String::new(),
                value: quality,
            });
        }
        for id in ids {
            if !self.domains.contains_key(id) {
                return Err(CorpusError::UnknownDomain(id.to_string()));
            }
            self.history.entry(id.clone()).or_default().push(quality);
        }
        Ok(())
    }

    /// Report-count range `(min, max)` over all domains.
    pub fn report_count_range(&self) -> Option<(usize, usize)> {
        let counts = self.domains.values().map(DomainProfile::report_count);
        let min = counts.clone().min()?;
        let max = counts.max()?;
        Some((min, max))
    }

    /// Serializes the registry back into corpus and sidecar records.
    pub fn to_records(&self) -> (Vec<ReportRecord>, Vec<DomainRecord>) {
        let mut reports = Vec::new();
        let mut domains = Vec::new();
        for d in self.domains.values() {
            for r in &d.reports {
                reports.push(ReportRecord {
                    report_id: r.id.clone(),
                    domain_id: r.domain_id.0.clone(),
                    title: r.title.clone(),
                    text: r.text.clone(),
                    embedding: r.embedding.clone().map(Vec::from),
                });
            }
            domains.push(DomainRecord {
                domain_id: d.id.0.clone(),
                name: Some(d.name.clone()),
                summary: Some(d.summary_text.clone()),
                embedding: d.embedding.clone().map(Vec::from),
                latency_ms: Some(d.cost_model.latency_ms),
                token_overhead: Some(d.cost_model.token_overhead),
                history: self.history.get(&d.id).cloned(),
            });
        }
        (reports, domains)
    }
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub report_id: String,
    pub domain_id: String,
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// One line of the optional domain sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRecord {
    pub domain_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_overhead: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
}

/// Parses newline-delimited JSON records. Blank lines are skipped; errors name
/// the 1-based line number.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(input: &str) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reads and validates a corpus file plus optional sidecar.
pub fn load_corpus(corpus: &Path, sidecar: Option<&Path>) -> Result<DomainRegistry, CorpusError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| CorpusError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    };
    let reports: Vec<ReportRecord> = parse_jsonl(&read(corpus)?)?;
    let domains: Vec<DomainRecord> = match sidecar {
        Some(p) => parse_jsonl(&read(p)?)?,
        None => Vec::new(),
    };
    validate_corpus(reports, domains)
}

/// Groups report records by domain and checks every registry invariant.
pub fn validate_corpus(
    raw_records: Vec<ReportRecord>,
    domain_records: Vec<DomainRecord>,
) -> Result<DomainRegistry, CorpusError> {
    let mut dim: Option<usize> = None;
    let mut check_embedding = |owner: String, values: Option<Vec<f64>>| -> Result<Option<UnitVector>, CorpusError> {
        let Some(values) = values else { return Ok(None) };
        let v = UnitVector::new(values).map_err(|reason| CorpusError::MalformedEmbedding {
            owner: owner.clone(),
            reason,
        })?;
        match dim {
            Some(d) if d != v.dim() => {
                return Err(CorpusError::MalformedEmbedding {
                    owner,
                    reason: format!("dimension {} differs from corpus dimension {d}", v.dim()),
                })
            }
            None => dim = Some(v.dim()),
            _ => {}
        }
        Ok(Some(v))
    };

    let mut grouped: BTreeMap<DomainId, Vec<CommunityReport>> = BTreeMap::new();
    let mut seen: BTreeSet<(DomainId, String)> = BTreeSet::new();
    for rec in raw_records {
        let domain_id = DomainId(rec.domain_id);
        if !seen.insert((domain_id.clone(), rec.report_id.clone())) {
            return Err(CorpusError::DuplicateReportId {
                domain_id: domain_id.0,
                report_id: rec.report_id,
            });
        }
        let embedding = check_embedding(format!("report {}/{}", domain_id, rec.report_id), rec.embedding)?;
        grouped.entry(domain_id.clone()).or_default().push(CommunityReport {
            id: rec.report_id,
            domain_id,
            title: rec.title,
            text: rec.text,
            embedding,
        });
    }

    let mut meta: BTreeMap<DomainId, DomainRecord> = BTreeMap::new();
    for rec in domain_records {
        let id = DomainId(rec.domain_id.clone());
        if meta.contains_key(&id) {
            return Err(CorpusError::DuplicateDomain(rec.domain_id));
        }
        if !grouped.contains_key(&id) {
            return Err(CorpusError::EmptyDomain(rec.domain_id));
        }
        meta.insert(id, rec);
    }

    let mut registry = DomainRegistry::default();
    for (id, reports) in grouped {
        let rec = meta.remove(&id);
        let (name, summary, embedding, cost, history) = match rec {
            Some(r) => (
                r.name,
                r.summary,
                r.embedding,
                CostModel {
                    latency_ms: r.latency_ms.unwrap_or(0),
                    token_overhead: r.token_overhead.unwrap_or(0),
                },
                r.history.unwrap_or_default(),
            ),
            None => (None, None, None, CostModel::default(), Vec::new()),
        };
        let embedding = check_embedding(format!("domain {id}"), embedding)?;
        if let Some(bad) = history.iter().find(|h| !(0.0..=1.0).contains(*h)) {
            return Err(CorpusError::HistoryOutOfRange {
                domain_id: id.0.clone(),
                value: *bad,
            });
        }
        let summary_text = summary.unwrap_or_else(|| default_summary(&reports));
        let profile = DomainProfile {
            name: name.unwrap_or_else(|| id.0.clone()),
            id: id.clone(),
            reports,
            summary_text,
            embedding,
            cost_model: cost,
        };
        if !history.is_empty() {
            registry.history.insert(id.clone(), history);
        }
        registry.domains.insert(id, profile);
    }
    Ok(registry)
}

/// Concatenation of the first sentence of each report.
pub fn default_summary(reports: &[CommunityReport]) -> String {
    reports
        .iter()
        .map(|r| first_sentence(&r.text))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let next = i + c.len_utf8();
            if next == bytes.len() || bytes[next].is_ascii_whitespace() {
                return &text[..next];
            }
        }
    }
    text
}
