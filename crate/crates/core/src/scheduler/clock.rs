use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Logical time in milliseconds on the harness clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_millis(ms: u64) -> Self {
        Timestamp(ms)
    }

    /// Rounds to the nearest millisecond; negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_sub(ms))
    }

    pub fn plus(self, ms: u64) -> Timestamp {
        Timestamp(self.0 + ms)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}s", self.0 / 1000, self.0 % 1000)
    }
}

/// Source of logical time. `now` never goes backwards.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Deterministic clock moved only by the run loop.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now_ms: AtomicU64,
}

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            now_ms: AtomicU64::new(start.0),
        }
    }

    pub fn advance(&self, ms: u64) -> Timestamp {
        Timestamp(self.now_ms.fetch_add(ms, Ordering::AcqRel) + ms)
    }

    /// Moves the clock forward to `t`. Requests to move backwards are ignored.
    pub fn advance_to(&self, t: Timestamp) -> Timestamp {
        let prev = self.now_ms.fetch_max(t.0, Ordering::AcqRel);
        Timestamp(prev.max(t.0))
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.now_ms.load(Ordering::Acquire))
    }
}

/// Wall-clock time measured from construction.
#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.origin.elapsed().as_millis() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_never_moves_backwards() {
        let clock = VirtualClock::new(Timestamp(100));
        assert_eq!(clock.advance(50), Timestamp(150));
        assert_eq!(clock.advance_to(Timestamp(120)), Timestamp(150));
        assert_eq!(clock.now(), Timestamp(150));
        assert_eq!(clock.advance_to(Timestamp(5000)), Timestamp(5000));
    }

    #[test]
    fn seconds_conversion_rounds_to_millis() {
        assert_eq!(Timestamp::from_secs_f64(20.0), Timestamp(20_000));
        assert_eq!(Timestamp::from_secs_f64(0.0004), Timestamp(0));
        assert_eq!(Timestamp::from_secs_f64(-3.0), Timestamp(0));
        assert_eq!(Timestamp(1500).to_string(), "1.500s");
    }
}
