//! Periodic and on-demand event observation driven by an injectable clock.

mod clock;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventError;
use crate::mesh::{ServiceNode, TickReport};

pub use clock::{Clock, SystemClock, Timestamp, VirtualClock};

pub const INTERVAL_ENV: &str = "EVENT_LISTENING_INTERVAL_MS";
pub const DEFAULT_INTERVAL_MS: u64 = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("invalid polling interval `{0}`: expected a positive integer of milliseconds")]
    InvalidInterval(String),
    #[error("node `{0}` is already scheduled")]
    DuplicateNode(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    #[default]
    Periodic,
    OnDemand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub interval_ms: u64,
    #[serde(default)]
    pub mode: ObservationMode,
    /// Events checked on each tick; empty means every registered event.
    #[serde(default)]
    pub observed_events: Vec<String>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            interval_ms: DEFAULT_INTERVAL_MS,
            mode: ObservationMode::Periodic,
            observed_events: Vec::new(),
        }
    }
}

impl ObservationConfig {
    pub fn periodic(interval_ms: u64) -> Self {
        Self {
            interval_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.mode == ObservationMode::Periodic && self.interval_ms == 0 {
            return Err(SchedulerError::InvalidInterval("0".into()));
        }
        Ok(())
    }
}

/// Parses an interval value as found in the environment.
pub fn parse_interval(raw: &str) -> Result<u64, SchedulerError> {
    match raw.trim().parse::<u64>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(SchedulerError::InvalidInterval(raw.to_string())),
    }
}

/// Reads `EVENT_LISTENING_INTERVAL_MS`. Unset yields `None`.
pub fn interval_from_env() -> Result<Option<u64>, SchedulerError> {
    match std::env::var(INTERVAL_ENV) {
        Ok(raw) => parse_interval(&raw).map(Some),
        Err(_) => Ok(None),
    }
}

/// Command line beats environment beats document beats the default.
pub fn resolve_interval(cli: Option<u64>, env: Option<u64>, document: Option<u64>) -> u64 {
    cli.or(env).or(document).unwrap_or(DEFAULT_INTERVAL_MS)
}

pub fn tick(node: &ServiceNode, now: Timestamp) -> TickReport {
    node.tick(now)
}

pub fn trigger_on_demand(node: &ServiceNode, event: &str, now: Timestamp) -> Result<TickReport, EventError> {
    node.trigger_on_demand(event, now)
}

struct Entry {
    node: Arc<ServiceNode>,
    interval_ms: u64,
    next_due: Timestamp,
}

/// Virtual-time tick schedule. Ticks for node `n` land exactly at
/// `start + k * interval` for k >= 1.
pub struct Scheduler {
    start: Timestamp,
    entries: BTreeMap<String, Entry>,
}

impl Scheduler {
    pub fn new(start: Timestamp) -> Self {
        Self {
            start,
            entries: BTreeMap::new(),
        }
    }

    /// Schedules a periodic node. On-demand nodes are accepted and never ticked.
    pub fn add(&mut self, node: Arc<ServiceNode>) -> Result<(), SchedulerError> {
        let config = node.observation();
        config.validate()?;
        if self.entries.contains_key(node.id()) {
            return Err(SchedulerError::DuplicateNode(node.id().to_string()));
        }
        if config.mode == ObservationMode::OnDemand {
            return Ok(());
        }
        self.entries.insert(
            node.id().to_string(),
            Entry {
                node,
                interval_ms: config.interval_ms,
                next_due: self.start.plus(config.interval_ms),
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_due(&self) -> Option<Timestamp> {
        self.entries.values().map(|e| e.next_due).min()
    }

    /// Runs every tick due at `now`, in node-id order.
    pub fn run_due(&mut self, now: Timestamp) -> Vec<TickReport> {
        let mut reports = Vec::new();
        for entry in self.entries.values_mut() {
            assert!(
                entry.next_due >= now,
                "tick for {} at {} was skipped",
                entry.node.id(),
                entry.next_due
            );
            if entry.next_due == now {
                reports.push(entry.node.tick(now));
                entry.next_due = now.plus(entry.interval_ms);
            }
        }
        reports
    }

    /// Advances `clock` through every tick up to and including `until`.
    pub fn run(&mut self, clock: &VirtualClock, until: Timestamp) -> Vec<TickReport> {
        let mut reports = Vec::new();
        while let Some(due) = self.next_due().filter(|&t| t <= until) {
            clock.advance_to(due);
            reports.extend(self.run_due(due));
        }
        clock.advance_to(until);
        reports
    }
}

/// Real-time ticking: one thread per periodic node until `until` or `stop`.
/// Reports come back sorted by (time, node id).
pub fn run_live(
    nodes: &[Arc<ServiceNode>],
    clock: Arc<dyn Clock>,
    until: Timestamp,
    stop: Arc<AtomicBool>,
) -> Vec<TickReport> {
    let handles: Vec<_> = nodes
        .iter()
        .filter(|n| n.observation().mode == ObservationMode::Periodic)
        .map(|node| {
            let node = node.clone();
            let clock = clock.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                let interval = node.observation().interval_ms.max(1);
                let start = clock.now();
                let mut reports = Vec::new();
                for k in 1.. {
                    let due = start.plus(k * interval);
                    if due > until {
                        break;
                    }
                    while clock.now() < due {
                        if stop.load(Ordering::Relaxed) {
                            return reports;
                        }
                        let wait = due.as_millis().saturating_sub(clock.now().as_millis()).min(50);
                        std::thread::sleep(Duration::from_millis(wait.max(1)));
                    }
                    reports.push(node.tick(clock.now()));
                }
                reports
            })
        })
        .collect();
    let mut reports: Vec<TickReport> = handles.into_iter().flat_map(|h| h.join().unwrap_or_default()).collect();
    reports.sort_by(|a, b| (a.at, &a.node).cmp(&(b.at, &b.node)));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_precedence() {
        assert_eq!(resolve_interval(Some(1000), Some(2000), Some(3000)), 1000);
        assert_eq!(resolve_interval(None, Some(2000), Some(3000)), 2000);
        assert_eq!(resolve_interval(None, None, Some(3000)), 3000);
        assert_eq!(resolve_interval(None, None, None), 5000);
    }

    #[test]
    fn interval_parsing_rejects_zero_and_garbage() {
        assert_eq!(parse_interval(" 250 "), Ok(250));
        assert!(parse_interval("0").is_err());
        assert!(parse_interval("-5").is_err());
        assert!(parse_interval("5s").is_err());
    }

    #[test]
    fn zero_interval_is_invalid_for_periodic_only() {
        assert!(ObservationConfig::periodic(0).validate().is_err());
        let on_demand = ObservationConfig {
            interval_ms: 0,
            mode: ObservationMode::OnDemand,
            observed_events: vec![],
        };
        assert!(on_demand.validate().is_ok());
    }

    #[test]
    fn empty_scheduler_runs_nothing() {
        let clock = VirtualClock::new(Timestamp::ZERO);
        let mut s = Scheduler::new(Timestamp::ZERO);
        assert!(s.run(&clock, Timestamp(60_000)).is_empty());
        assert_eq!(clock.now(), Timestamp(60_000));
    }
}
