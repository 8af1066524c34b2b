//! Injectable time source, so quota and scheduling tests need not sleep.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Time since the Unix epoch.
    fn now(&self) -> Duration;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    nanos: AtomicU64,
}

impl ManualClock {
    pub fn new(start: Duration) -> ManualClock {
        ManualClock { nanos: AtomicU64::new(start.as_nanos() as u64) }
    }

    pub fn advance(&self, by: Duration) {
        self.nanos.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }

    pub fn set(&self, to: Duration) {
        self.nanos.store(to.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("elapsed-time quota of {}s exceeded", limit.as_secs_f64())]
pub struct BudgetExceeded {
    pub limit: Duration,
}

/// An elapsed-time allowance measured against a [`Clock`].
pub struct Budget<'a> {
    clock: &'a dyn Clock,
    started: Duration,
    limit: Duration,
}

/// Rows processed between budget checks in row loops.
pub const CHECK_INTERVAL: usize = 1024;

impl<'a> Budget<'a> {
    pub fn new(clock: &'a dyn Clock, limit: Duration) -> Budget<'a> {
        Budget { clock, started: clock.now(), limit }
    }

    pub fn unlimited(clock: &'a dyn Clock) -> Budget<'a> {
        Budget::new(clock, Duration::MAX)
    }

    pub fn limit(&self) -> Duration {
        self.limit
    }

    pub fn elapsed(&self) -> Duration {
        self.clock.now().saturating_sub(self.started)
    }

    pub fn remaining(&self) -> Duration {
        self.limit.saturating_sub(self.elapsed())
    }

    pub fn check(&self) -> Result<(), BudgetExceeded> {
        if self.elapsed() > self.limit {
            Err(BudgetExceeded { limit: self.limit })
        } else {
            Ok(())
        }
    }

    /// Checks on every [`CHECK_INTERVAL`]th row.
    pub fn tick(&self, row: usize) -> Result<(), BudgetExceeded> {
        if row.is_multiple_of(CHECK_INTERVAL) {
            self.check()
        } else {
            Ok(())
        }
    }
}

impl fmt::Debug for Budget<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Budget").field("elapsed", &self.elapsed()).field("limit", &self.limit).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_budget() {
        let clock = ManualClock::new(Duration::from_secs(100));
        let b = Budget::new(&clock, Duration::from_secs(90));
        assert!(b.check().is_ok());
        clock.advance(Duration::from_secs(90));
        assert!(b.check().is_ok());
        clock.advance(Duration::from_millis(1));
        assert_eq!(b.check(), Err(BudgetExceeded { limit: Duration::from_secs(90) }));
        assert!(b.tick(1).is_ok());
        assert!(b.tick(2048).is_err());
        assert_eq!(b.remaining(), Duration::ZERO);
    }
}
