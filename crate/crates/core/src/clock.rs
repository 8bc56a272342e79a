//! Monotonic time sources.
//!
//! Time is expressed as a [`Duration`] since the clock's origin. Concurrent
//! workers each keep their own cursor on the timeline and call
//! [`Clock::settle`] to let time pass on that cursor; the coordinator then
//! moves the shared clock forward with [`Clock::advance_to`]. Under the real
//! clock `settle` sleeps and `advance_to` is a no-op. Under the simulated
//! clock `settle` is pure arithmetic and `advance_to` moves the shared time.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync + Debug {
    /// Current time on the shared timeline.
    fn now(&self) -> Duration;

    /// Waits until `target` has been reached on a worker's cursor and returns
    /// the time at which the wait ended (never earlier than `target`).
    fn settle(&self, target: Duration) -> Duration;

    /// Moves the shared timeline forward to at least `t`.
    fn advance_to(&self, t: Duration);

    fn is_simulated(&self) -> bool;
}

/// Wall-clock time measured from construction.
#[derive(Debug, Clone)]
pub struct RealClock {
    origin: Instant,
}

impl RealClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn settle(&self, target: Duration) -> Duration {
        let now = self.now();
        if now < target {
            std::thread::sleep(target - now);
        }
        self.now().max(target)
    }

    fn advance_to(&self, _t: Duration) {}

    fn is_simulated(&self) -> bool {
        false
    }
}

/// Manually advanced clock with nanosecond resolution.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    nanos: Arc<AtomicU64>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.nanos.fetch_add(to_nanos(by), Ordering::AcqRel);
    }
}

fn to_nanos(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::Acquire))
    }

    fn settle(&self, target: Duration) -> Duration {
        target
    }

    fn advance_to(&self, t: Duration) {
        self.nanos.fetch_max(to_nanos(t), Ordering::AcqRel);
    }

    fn is_simulated(&self) -> bool {
        true
    }
}
