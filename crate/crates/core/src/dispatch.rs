//! Budget-gated, bounded-concurrency call dispatch.
//!
//! Calls are issued in waves of at most `concurrency` requests. Before each
//! wave the coordinator checks the time and token budgets at the wave's start
//! time; a blocked wave and everything after it is never started. Calls in a
//! wave run on scoped threads, each with its own cursor on the timeline:
//! simulated domain latency is waited out first, then the backend is invoked.
//! Records are appended in call order once the wave finishes and the shared
//! clock moves to the latest finish time. Ledger contents therefore do not
//! depend on thread completion order.

use std::time::Duration;

use crate::backend::{invoke, AgentRequest, AgentResponse, Backend};
use crate::clock::Clock;
use crate::error::BackendError;
use crate::ledger::{remaining_at, CallOutcome, CallRecord, CostLedger, Stage};
use crate::model::{Budget, DomainId};
use crate::seeding::RetrievalMode;

/// Minimum remaining time required before a call may start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// Any time left at all.
    Open,
    /// At least this many seconds left.
    Reserve(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Halt {
    TimeDepleted,
    TokenBudgetExceeded,
}

/// One call to dispatch.
#[derive(Debug, Clone)]
pub struct CallSpec {
    pub stage: Stage,
    pub domain_id: Option<DomainId>,
    pub mode: Option<RetrievalMode>,
    pub latency: Duration,
    pub token_overhead: u64,
    pub request: AgentRequest,
}

impl CallSpec {
    /// An agent call not tied to any domain.
    pub fn agent(stage: Stage, request: AgentRequest) -> Self {
        Self {
            stage,
            domain_id: None,
            mode: None,
            latency: Duration::ZERO,
            token_overhead: 0,
            request,
        }
    }
}

/// Per-call results of a fan-out. `None` marks calls never started because
/// the budget gate closed first.
#[derive(Debug)]
pub struct Dispatched {
    pub outcomes: Vec<Option<Result<AgentResponse, BackendError>>>,
    pub halted: Option<Halt>,
}

/// Everything a stage needs to issue calls.
#[derive(Clone, Copy)]
pub struct Session<'a> {
    pub backend: &'a dyn Backend,
    pub clock: &'a dyn Clock,
    pub ledger: &'a CostLedger,
    pub budget: Budget,
    /// Clock reading at which the run began.
    pub started_at: Duration,
    pub concurrency: usize,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend, clock: &'a dyn Clock, ledger: &'a CostLedger, budget: Budget) -> Self {
        Self {
            backend,
            clock,
            ledger,
            budget,
            started_at: clock.now(),
            concurrency: 8,
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn remaining(&self) -> f64 {
        remaining_at(&self.budget, self.clock.now(), self.started_at)
    }

    /// Returns why a call starting now would be refused, if it would.
    pub fn blocked(&self, gate: Gate) -> Option<Halt> {
        if self.ledger.totals().total_tokens() > self.budget.max_tokens {
            return Some(Halt::TokenBudgetExceeded);
        }
        let remaining = self.remaining();
        let ok = match gate {
            Gate::Open => remaining > 0.0,
            Gate::Reserve(secs) => remaining >= secs,
        };
        (!ok).then_some(Halt::TimeDepleted)
    }

    /// Dispatches a single call.
    pub fn call(&self, spec: CallSpec, gate: Gate) -> Result<Result<AgentResponse, BackendError>, Halt> {
        let mut d = self.fan_out(vec![spec], gate);
        match d.outcomes.pop().flatten() {
            Some(r) => Ok(r),
            None => Err(d.halted.unwrap_or(Halt::TimeDepleted)),
        }
    }

    /// Dispatches `calls` in budget-gated waves of at most `concurrency`.
    pub fn fan_out(&self, calls: Vec<CallSpec>, gate: Gate) -> Dispatched {
        let mut outcomes: Vec<Option<Result<AgentResponse, BackendError>>> = Vec::with_capacity(calls.len());
        let mut halted = None;
        let mut pending = calls.into_iter().peekable();
        while pending.peek().is_some() {
            if let Some(h) = self.blocked(gate) {
                halted = Some(h);
                break;
            }
            let wave: Vec<CallSpec> = pending.by_ref().take(self.concurrency).collect();
            let start = self.clock.now();
            let results: Vec<Timed> = if wave.len() == 1 {
                vec![self.run_one(&wave[0], start)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = wave.iter().map(|spec| s.spawn(move || self.run_one(spec, start))).collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("dispatch worker panicked"))
                        .collect()
                })
            };
            let mut wave_end = start;
            for (spec, timed) in wave.iter().zip(results) {
                wave_end = wave_end.max(timed.ended_at);
                self.ledger.record_call(record_for(spec, &timed, start));
                outcomes.push(Some(timed.result));
            }
            self.clock.advance_to(wave_end);
        }
        outcomes.extend(pending.map(|_| None));
        Dispatched { outcomes, halted }
    }

    fn run_one(&self, spec: &CallSpec, start: Duration) -> Timed {
        let after_latency = self.clock.settle(start + spec.latency);
        let result = invoke(self.backend, &spec.request);
        let service = match &result {
            Ok(r) => Duration::from_millis(r.elapsed_ms),
            Err(_) => Duration::ZERO,
        };
        let ended_at = self.clock.settle(after_latency + service);
        Timed { result, ended_at }
    }
}

struct Timed {
    result: Result<AgentResponse, BackendError>,
    ended_at: Duration,
}

fn record_for(spec: &CallSpec, timed: &Timed, started_at: Duration) -> CallRecord {
    let (tokens_in, tokens_out, attempts, outcome) = match &timed.result {
        Ok(r) => (
            r.usage.tokens_in + spec.token_overhead,
            r.usage.tokens_out,
            r.attempts,
            CallOutcome::Success,
        ),
        Err(e) => {
            let attempts = match e {
                BackendError::TransportFailure { attempts, .. } => *attempts,
                _ => 1,
            };
            (0, 0, attempts, CallOutcome::Failed(e.to_string()))
        }
    };
    CallRecord {
        sequence_no: 0,
        stage: spec.stage,
        role: spec.request.role,
        domain_id: spec.domain_id.clone(),
        mode: spec.mode,
        tokens_in,
        tokens_out,
        started_at,
        ended_at: timed.ended_at,
        attempts,
        outcome,
    }
}
