use std::path::PathBuf;

use meshrag_core::model::load_corpus;
use meshrag_core::refinement::{decide, overall_quality as overall, QualityReport, StrategyThresholds};
use meshrag_core::relevance::{CompositeWeights, TierThresholds};
use meshrag_core::{execute, DomainId, DomainRegistry, Query, RunConfig, RunError, RunMode};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;

create_exception!(meshrag, MeshragError, PyException, "A run failed; `args[1]` is the CLI exit code.");

fn run_err(e: RunError) -> PyErr {
    MeshragError::new_err((e.to_string(), e.exit_code()))
}

/// A validated corpus grouped into domains.
#[pyclass(name = "Registry", module = "meshrag")]
struct PyRegistry {
    inner: DomainRegistry,
}

#[pymethods]
impl PyRegistry {
    #[staticmethod]
    #[pyo3(signature = (corpus, domains=None))]
    fn load(corpus: PathBuf, domains: Option<PathBuf>) -> PyResult<Self> {
        load_corpus(&corpus, domains.as_deref())
            .map(|inner| Self { inner })
            .map_err(|e| run_err(e.into()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn domain_ids(&self) -> Vec<String> {
        self.inner.domain_ids().map(|d| d.as_str().to_owned()).collect()
    }

    fn report_count(&self, domain_id: &str) -> PyResult<usize> {
        self.inner
            .get(&DomainId::new(domain_id))
            .map(|d| d.report_count())
            .ok_or_else(|| PyKeyError::new_err(domain_id.to_owned()))
    }

    fn history(&self, domain_id: &str) -> Vec<f64> {
        self.inner.history(&DomainId::new(domain_id)).map(<[f64]>::to_vec).unwrap_or_default()
    }

    /// `(min, max)` reports per domain.
    fn report_count_range(&self) -> Option<(usize, usize)> {
        self.inner.report_count_range()
    }

    fn __repr__(&self) -> String {
        format!("Registry({} domains)", self.inner.len())
    }
}

#[pyclass(name = "Config", module = "meshrag")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => RunConfig::from_toml(text).map_err(run_err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(|inner| Self { inner }).map_err(run_err)
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = mode.parse::<RunMode>().map_err(PyValueError::new_err)?;
        Ok(())
    }

    #[getter]
    fn corpus_path(&self) -> Option<PathBuf> {
        self.inner.corpus_path.clone()
    }

    #[setter]
    fn set_corpus_path(&mut self, p: Option<PathBuf>) {
        self.inner.corpus_path = p;
    }

    #[getter]
    fn domains_path(&self) -> Option<PathBuf> {
        self.inner.domains_path.clone()
    }

    #[setter]
    fn set_domains_path(&mut self, p: Option<PathBuf>) {
        self.inner.domains_path = p;
    }

    #[getter]
    fn script_path(&self) -> Option<PathBuf> {
        self.inner.script_path.clone()
    }

    #[setter]
    fn set_script_path(&mut self, p: Option<PathBuf>) {
        self.inner.script_path = p;
    }

    #[getter]
    fn budget_secs(&self) -> f64 {
        self.inner.budget_secs
    }

    #[setter]
    fn set_budget_secs(&mut self, secs: f64) {
        self.inner.budget_secs = secs;
    }

    #[getter]
    fn token_budget(&self) -> u64 {
        self.inner.token_budget
    }

    #[setter]
    fn set_token_budget(&mut self, tokens: u64) {
        self.inner.token_budget = tokens;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(run_err)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={:?}, budget_secs={})", self.inner.mode.as_str(), self.inner.budget_secs)
    }
}

/// Answers one query and returns the run report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, query, query_id="q0", registry=None))]
fn run(py: Python<'_>, config: &PyConfig, query: &str, query_id: &str, registry: Option<&PyRegistry>) -> PyResult<String> {
    let config = config.inner.clone();
    let query = Query::new(query_id, query).map_err(|e| run_err(e.into()))?;
    let mut registry = match registry {
        Some(r) => r.inner.clone(),
        None => config.load_registry().map_err(run_err)?,
    };
    py.detach(move || {
        config.validate()?;
        let backend = config.build_backend()?;
        let clock = config.build_clock();
        let (report, _) = execute(&config, &mut registry, backend.as_ref(), clock.as_ref(), &query)?;
        Ok(report.to_json())
    })
    .map_err(run_err)
}

/// Refinement decision for one quality assessment under the default thresholds.
#[pyfunction]
fn select_strategy(completeness: f64, breadth: f64, remaining_secs: f64) -> String {
    format!("{:?}", decide(completeness, breadth, remaining_secs, &StrategyThresholds::default()))
}

#[pyfunction]
fn overall_quality(completeness: f64, breadth: f64) -> f64 {
    overall(&QualityReport {
        completeness,
        breadth,
        gaps: vec![],
        followups: vec![],
    })
}

/// Default-weighted composite of the three relevance signals.
#[pyfunction]
fn composite_score(s_sim: f64, s_rich: f64, s_hist: f64) -> f64 {
    CompositeWeights::default().composite(s_sim, s_rich, s_hist)
}

#[pyfunction]
fn tier_for(composite: f64) -> String {
    format!("{:?}", TierThresholds::default().tier_for(composite)).to_uppercase()
}

#[pymodule]
fn meshrag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(select_strategy, m)?)?;
    m.add_function(wrap_pyfunction!(overall_quality, m)?)?;
    m.add_function(wrap_pyfunction!(composite_score, m)?)?;
    m.add_function(wrap_pyfunction!(tier_for, m)?)?;
    m.add("MeshragError", m.py().get_type::<MeshragError>())?;
    Ok(())
}
