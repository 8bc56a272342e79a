//! Run configuration, validation, fingerprinting and the single-query runner.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::backend::{AgentPrompts, Backend, HttpBackend, HttpConfig, ScriptedBackend};
use crate::clock::{Clock, RealClock, SimClock};
use crate::dispatch::Session;
use crate::error::RunError;
use crate::ledger::CostLedger;
use crate::model::{load_corpus, Budget, DomainRegistry, Query};
use crate::pipeline::{run_mode, RunMode, ScoutConfig};
use crate::relevance::TierThresholds;
use crate::report::{run_report, RunReport};

pub const DEFAULT_BUDGET_SECS: f64 = 300.0;
pub const DEFAULT_TOKEN_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

/// `Auto` simulates time for scripted runs and uses wall time for HTTP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    #[default]
    Auto,
    Real,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub domains_path: Option<PathBuf>,
    pub mode: RunMode,
    pub backend: BackendKind,
    pub script_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub prompts_path: Option<PathBuf>,
    pub budget_secs: f64,
    pub token_budget: u64,
    pub scout: ScoutConfig,
    /// Cut-offs for the scripted backend's tier policy.
    pub tiers: TierThresholds,
    pub concurrency: usize,
    /// Recorded in the fingerprint; every tie-break is deterministic.
    pub seed: u64,
    pub clock: ClockKind,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_path: None,
            domains_path: None,
            mode: RunMode::Scout,
            backend: BackendKind::Scripted,
            script_path: None,
            endpoint: None,
            model: None,
            prompts_path: None,
            budget_secs: DEFAULT_BUDGET_SECS,
            token_budget: DEFAULT_TOKEN_BUDGET,
            scout: ScoutConfig::default(),
            tiers: TierThresholds::default(),
            concurrency: 8,
            seed: 0,
            clock: ClockKind::Auto,
            output_path: None,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must be in [0, 1], got {v}"))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(format!("{name} must be a finite non-negative number, got {v}"))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.check().map_err(RunError::Config)
    }

    fn check(&self) -> Result<(), String> {
        if !(self.budget_secs.is_finite() && self.budget_secs > 0.0) {
            return Err(format!("budget_secs must be positive, got {}", self.budget_secs));
        }
        if self.token_budget == 0 {
            return Err("token_budget must be positive".into());
        }
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1".into());
        }
        let s = &self.scout.refinement.strategy;
        unit("completeness threshold", s.completeness)?;
        unit("breadth threshold", s.breadth)?;
        non_negative("depth_secs", s.depth_secs)?;
        non_negative("breadth_secs", s.breadth_secs)?;
        non_negative("hybrid_secs", s.hybrid_secs)?;
        let t = &self.scout.refinement.termination;
        unit("quality_threshold", t.quality_threshold)?;
        non_negative("min_remaining_secs", t.min_remaining_secs)?;
        if !t.epsilon.is_finite() {
            return Err("epsilon must be finite".into());
        }
        let r = &self.scout.refinement.retrieval;
        if r.k_global == 0 || r.k_local == 0 {
            return Err("k and k_local must be at least 1".into());
        }
        let w = &self.scout.weights;
        for (name, v) in [("sim", w.sim), ("rich", w.rich), ("hist", w.hist)] {
            unit(&format!("{name} weight"), v)?;
        }
        if ((w.sim + w.rich + w.hist) - 1.0).abs() > 1e-9 {
            return Err("signal weights must sum to 1".into());
        }
        for (name, v) in [("high", self.tiers.high), ("moderate", self.tiers.moderate), ("potential", self.tiers.potential)] {
            unit(&format!("{name} tier threshold"), v)?;
        }
        if !(self.tiers.high >= self.tiers.moderate && self.tiers.moderate >= self.tiers.potential) {
            return Err("tier thresholds must be ordered high >= moderate >= potential".into());
        }
        if self.backend == BackendKind::Http && (self.endpoint.is_none() || self.model.is_none()) {
            return Err("http backend needs endpoint and model".into());
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<Budget, RunError> {
        Budget::new(self.budget_secs, self.token_budget).map_err(RunError::from)
    }

    fn simulated(&self) -> bool {
        match self.clock {
            ClockKind::Simulated => true,
            ClockKind::Real => false,
            ClockKind::Auto => self.backend == BackendKind::Scripted,
        }
    }

    pub fn build_clock(&self) -> Box<dyn Clock> {
        if self.simulated() {
            Box::new(SimClock::new())
        } else {
            Box::new(RealClock::new())
        }
    }

    /// Scripted runs without a script file use the built-in wildcard defaults.
    pub fn build_backend(&self) -> Result<Box<dyn Backend>, RunError> {
        let backend_err = |e: crate::error::BackendError| RunError::Config(e.to_string());
        match self.backend {
            BackendKind::Scripted => {
                let b = match &self.script_path {
                    Some(p) => ScriptedBackend::load_script(p).map_err(backend_err)?,
                    None => ScriptedBackend::wildcard_defaults(),
                };
                Ok(Box::new(b.with_tier_policy(self.tiers, self.scout.weights)))
            }
            BackendKind::Http => {
                let mut cfg = HttpConfig::new(
                    self.endpoint.clone().unwrap_or_default(),
                    self.model.clone().unwrap_or_default(),
                );
                cfg.concurrency_limit = self.concurrency;
                if let Some(p) = &self.prompts_path {
                    cfg.prompts = AgentPrompts::load(p).map_err(backend_err)?;
                }
                Ok(Box::new(HttpBackend::new(cfg).map_err(backend_err)?))
            }
        }
    }

    pub fn load_registry(&self) -> Result<DomainRegistry, RunError> {
        let corpus = self
            .corpus_path
            .as_deref()
            .ok_or_else(|| RunError::Config("corpus path is required".into()))?;
        Ok(load_corpus(corpus, self.domains_path.as_deref())?)
    }

    /// SHA-256 over the canonical config. Input files enter by content digest
    /// rather than path; the output path is excluded.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("output_path");
        for key in ["corpus_path", "domains_path", "script_path", "prompts_path"] {
            if let Some(Value::String(p)) = obj.remove(key) {
                obj.insert(key.replace("_path", "_sha256"), json!(file_digest(Path::new(&p))));
            }
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn file_digest(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => hex::encode(Sha256::digest(&bytes)),
        Err(_) => format!("unreadable:{}", path.display()),
    }
}

/// Runs one query and builds its report. The caller owns the backend and
/// clock so several queries can share them.
pub fn execute(
    config: &RunConfig,
    registry: &mut DomainRegistry,
    backend: &dyn Backend,
    clock: &dyn Clock,
    query: &Query,
) -> Result<(RunReport, CostLedger), RunError> {
    config.validate()?;
    let ledger = CostLedger::new();
    let session = Session::new(backend, clock, &ledger, config.budget()?).with_concurrency(config.concurrency);
    let outcome = run_mode(config.mode, &session, query, registry, &config.scout)?;
    let wall = clock.now().saturating_sub(session.started_at).as_secs_f64();
    let report = run_report(query, &outcome, &ledger.records(), wall, &config.fingerprint());
    Ok((report, ledger))
}
