//! Append-only cost ledger and budget checks.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::AgentRole;
use crate::clock::Clock;
use crate::model::{Budget, DomainId};
use crate::seeding::RetrievalMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Relevance,
    Seeding,
    Refinement,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallOutcome {
    Success,
    Failed(String),
}

impl CallOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, CallOutcome::Success)
    }
}

/// One agent or domain call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// Assigned by the ledger on append.
    pub sequence_no: u64,
    pub stage: Stage,
    pub role: AgentRole,
    pub domain_id: Option<DomainId>,
    pub mode: Option<RetrievalMode>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub started_at: Duration,
    pub ended_at: Duration,
    pub attempts: u32,
    pub outcome: CallOutcome,
}

impl CallRecord {
    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }

    pub fn is_retrieval(&self) -> bool {
        self.role == AgentRole::PartialGenerator
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub total_tokens_in: u64,
    pub total_tokens_out: u64,
    pub total_calls: u64,
    pub per_domain_calls: BTreeMap<DomainId, u64>,
}

impl LedgerTotals {
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens_in + self.total_tokens_out
    }

    fn add(&mut self, r: &CallRecord) {
        self.total_tokens_in += r.tokens_in;
        self.total_tokens_out += r.tokens_out;
        self.total_calls += 1;
        if let Some(d) = &r.domain_id {
            *self.per_domain_calls.entry(d.clone()).or_default() += 1;
        }
    }

    /// Recomputes totals from scratch.
    pub fn fold<'a>(records: impl IntoIterator<Item = &'a CallRecord>) -> Self {
        let mut t = Self::default();
        for r in records {
            t.add(r);
        }
        t
    }
}

#[derive(Debug, Default)]
struct LedgerInner {
    records: Vec<CallRecord>,
    totals: LedgerTotals,
}

/// Thread-safe append-only record of every call in a run.
#[derive(Debug, Default)]
pub struct CostLedger {
    inner: Mutex<LedgerInner>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `record`, assigning the next gap-free sequence number.
    pub fn record_call(&self, mut record: CallRecord) -> u64 {
        let mut inner = self.inner.lock().expect("ledger lock poisoned");
        let seq = inner.records.len() as u64;
        record.sequence_no = seq;
        inner.totals.add(&record);
        inner.records.push(record);
        seq
    }

    pub fn totals(&self) -> LedgerTotals {
        self.inner.lock().expect("ledger lock poisoned").totals.clone()
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().expect("ledger lock poisoned").records.clone()
    }

    pub fn len(&self) -> u64 {
        self.inner.lock().expect("ledger lock poisoned").records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Remaining time in seconds, floored at zero.
pub fn remaining_time(budget: &Budget, clock: &dyn Clock, started_at: Duration) -> f64 {
    remaining_at(budget, clock.now(), started_at)
}

pub(crate) fn remaining_at(budget: &Budget, now: Duration, started_at: Duration) -> f64 {
    let elapsed = now.saturating_sub(started_at).as_secs_f64();
    (budget.max_time_secs - elapsed).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenStatus {
    Ok,
    Exceeded,
}

/// Exceeded iff total tokens (in + out) are strictly above the budget.
pub fn check_token_budget(ledger: &CostLedger, budget: &Budget) -> TokenStatus {
    if ledger.totals().total_tokens() > budget.max_tokens {
        TokenStatus::Exceeded
    } else {
        TokenStatus::Ok
    }
}
