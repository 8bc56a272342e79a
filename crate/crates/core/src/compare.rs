//! Runs a query set under several modes and aggregates cost per coverage level.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::config::{execute, RunConfig};
use crate::error::{CorpusError, RunError};
use crate::model::{parse_jsonl, DomainRegistry, Query};
use crate::pipeline::RunMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub coverage_level: u32,
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_jsonl(&text)
}

/// One finished (or failed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub query_id: String,
    pub level: u32,
    pub mode: RunMode,
    pub result: Result<RunCost, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunCost {
    pub wall_seconds: f64,
    pub tokens: u64,
    pub calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub level: u32,
    pub mode: RunMode,
    pub runs: usize,
    pub failures: usize,
    pub mean_wall_seconds: Option<f64>,
    pub mean_tokens: Option<f64>,
    pub mean_calls: Option<f64>,
}

fn run_one(config: &RunConfig, registry: &DomainRegistry, backend: &dyn Backend, record: &QueryRecord, mode: RunMode) -> RunSample {
    let mut cfg = config.clone();
    cfg.mode = mode;
    let result = Query::new(record.query_id.clone(), record.text.clone())
        .map_err(RunError::from)
        .and_then(|q| {
            // Each run starts from the same registry state and its own clock.
            let mut reg = registry.clone();
            let clock = cfg.build_clock();
            execute(&cfg, &mut reg, backend, clock.as_ref(), &q)
        })
        .map(|(report, _)| RunCost {
            wall_seconds: report.cost.wall_seconds,
            tokens: report.cost.total_tokens_in + report.cost.total_tokens_out,
            calls: report.cost.total_calls,
        })
        .map_err(|e| e.to_string());
    RunSample {
        query_id: record.query_id.clone(),
        level: record.coverage_level,
        mode,
        result,
    }
}

/// Runs every query under every mode, up to `config.concurrency` runs at once.
pub fn run_comparison(
    config: &RunConfig,
    registry: &DomainRegistry,
    backend: &dyn Backend,
    queries: &[QueryRecord],
    modes: &[RunMode],
) -> Vec<RunSample> {
    let jobs: Vec<(&QueryRecord, RunMode)> = queries.iter().flat_map(|q| modes.iter().map(move |m| (q, *m))).collect();
    let mut samples = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(config.concurrency.max(1)) {
        let done: Vec<RunSample> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(q, m)| s.spawn(move || run_one(config, registry, backend, q, *m)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("comparison worker panicked")).collect()
        });
        samples.extend(done);
    }
    samples
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Groups samples by (coverage level, mode) in mode order as given.
pub fn aggregate(samples: &[RunSample], modes: &[RunMode]) -> Vec<ComparisonRow> {
    let mut groups: BTreeMap<(u32, usize), Vec<&RunSample>> = BTreeMap::new();
    for s in samples {
        let idx = modes.iter().position(|m| *m == s.mode).unwrap_or(modes.len());
        groups.entry((s.level, idx)).or_default().push(s);
    }
    groups
        .into_values()
        .map(|group| {
            let ok: Vec<RunCost> = group.iter().filter_map(|s| s.result.as_ref().ok().copied()).collect();
            ComparisonRow {
                level: group[0].level,
                mode: group[0].mode,
                runs: group.len(),
                failures: group.len() - ok.len(),
                mean_wall_seconds: mean(&ok.iter().map(|c| c.wall_seconds).collect::<Vec<_>>()),
                mean_tokens: mean(&ok.iter().map(|c| c.tokens as f64).collect::<Vec<_>>()),
                mean_calls: mean(&ok.iter().map(|c| c.calls as f64).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn write_csv(rows: &[ComparisonRow], path: &Path) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::Writer::from_writer(tmp.as_file());
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
