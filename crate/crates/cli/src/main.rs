use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshrag_core::compare::{aggregate, load_queries, run_comparison, write_csv};
use meshrag_core::config::{BackendKind, ClockKind};
use meshrag_core::model::load_corpus;
use meshrag_core::{execute, Query, RunConfig, RunError, RunMode};

#[derive(Parser)]
#[command(name = "meshrag", version, about = "Budget-aware retrieval across many domain knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print its shape.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Optional domain sidecar (JSONL).
        #[arg(long)]
        domains: Option<PathBuf>,
    },
    /// Answer one query and write a run report.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Query text.
        query: String,
        #[arg(long, default_value = "q0")]
        query_id: String,
    },
    /// Run a query set under several modes and write a cost table (CSV).
    Compare {
        #[command(flatten)]
        opts: RunOpts,
        /// JSONL with query_id, text and coverage_level.
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated modes.
        #[arg(long, value_delimiter = ',', default_value = "scout,drift-dec")]
        modes: Vec<RunMode>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    domains: Option<PathBuf>,
    /// scout, central-local, central-global, drift-central or drift-dec.
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long, value_parser = ["scripted", "http"])]
    backend: Option<String>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Agent prompt file (TOML) for the HTTP backend.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Time budget in seconds [default: 300].
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long)]
    token_budget: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long)]
    iteration_cap: Option<usize>,
    /// Reports per global retrieval.
    #[arg(long)]
    k: Option<usize>,
    /// Reports per local retrieval.
    #[arg(long)]
    k_local: Option<usize>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["auto", "real", "simulated"])]
    clock: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunOpts {
    fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(c.mode, self.mode);
        set!(c.budget_secs, self.budget_secs);
        set!(c.token_budget, self.token_budget);
        set!(c.scout.refinement.termination.epsilon, self.epsilon);
        set!(c.scout.refinement.termination.iteration_cap, self.iteration_cap);
        set!(c.scout.refinement.retrieval.k_global, self.k);
        set!(c.scout.refinement.retrieval.k_local, self.k_local);
        set!(c.concurrency, self.concurrency);
        set!(c.seed, self.seed);
        for (field, value) in [
            (&mut c.corpus_path, &self.corpus),
            (&mut c.domains_path, &self.domains),
            (&mut c.script_path, &self.script),
            (&mut c.prompts_path, &self.prompts),
            (&mut c.output_path, &self.out),
        ] {
            if value.is_some() {
                *field = value.clone();
            }
        }
        if self.endpoint.is_some() {
            c.endpoint = self.endpoint.clone();
        }
        if self.model.is_some() {
            c.model = self.model.clone();
        }
        if let Some(b) = &self.backend {
            c.backend = if b == "http" { BackendKind::Http } else { BackendKind::Scripted };
        }
        if let Some(k) = &self.clock {
            c.clock = match k.as_str() {
                "real" => ClockKind::Real,
                "simulated" => ClockKind::Simulated,
                _ => ClockKind::Auto,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn ingest(corpus: PathBuf, domains: Option<PathBuf>) -> Result<(), RunError> {
    let registry = load_corpus(&corpus, domains.as_deref())?;
    let (lo, hi) = registry.report_count_range().unwrap_or((0, 0));
    println!("{} domains, reports {lo}–{hi}", registry.len());
    Ok(())
}

fn run(opts: RunOpts, query: String, query_id: String) -> Result<(), RunError> {
    let config = opts.resolve()?;
    let mut registry = config.load_registry()?;
    let query = Query::new(query_id, query)?;
    let backend = config.build_backend()?;
    let clock = config.build_clock();
    let (report, _) = execute(&config, &mut registry, backend.as_ref(), clock.as_ref(), &query)?;
    let out = config.output_path.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    report
        .write_atomic(&out)
        .map_err(|e| RunError::Config(format!("writing {}: {e}", out.display())))?;
    println!("{}", report.answer.text);
    let quality = report
        .answer
        .quality
        .map(|q| format!("{q:.3}"))
        .unwrap_or_else(|| "n/a".into());
    let stop = report
        .stop_reason
        .map(|s| format!("{s:?}"))
        .unwrap_or_else(|| "-".into());
    eprintln!(
        "mode={} best_iteration={} quality={quality} stop={stop} calls={} tokens={} wall={:.2}s report={}",
        report.mode,
        report.best_iteration,
        report.cost.total_calls,
        report.cost.total_tokens_in + report.cost.total_tokens_out,
        report.cost.wall_seconds,
        out.display()
    );
    Ok(())
}

fn compare(opts: RunOpts, queries: PathBuf, modes: Vec<RunMode>) -> Result<(), RunError> {
    let config = opts.resolve()?;
    let registry = config.load_registry()?;
    let queries = load_queries(&queries)?;
    let backend = config.build_backend()?;
    let samples = run_comparison(&config, &registry, backend.as_ref(), &queries, &modes);
    for s in &samples {
        if let Err(e) = &s.result {
            eprintln!("{} [{}] failed: {e}", s.query_id, s.mode);
        }
    }
    let rows = aggregate(&samples, &modes);
    let out = config.output_path.clone().unwrap_or_else(|| PathBuf::from("comparison.csv"));
    write_csv(&rows, &out).map_err(|e| RunError::Config(format!("writing {}: {e}", out.display())))?;
    eprintln!("{} runs, {} rows -> {}", samples.len(), rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { corpus, domains } => ingest(corpus, domains),
        Command::Run { opts, query, query_id } => run(opts, query, query_id),
        Command::Compare { opts, queries, modes } => compare(opts, queries, modes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
