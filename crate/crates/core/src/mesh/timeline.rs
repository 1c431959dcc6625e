use serde::{Deserialize, Serialize};

use super::Notification;
use crate::actions::ActionOutcome;
use crate::metrics::MetricsSample;
use crate::scheduler::Timestamp;
use crate::sim::StateTransition;

/// Why an action ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum Cause {
    Subscription {
        event: String,
    },
    Notification {
        event: String,
        origin: String,
    },
    Remote {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin: Option<String>,
    },
    Direct,
    Deferred,
}

/// How one subscription reacted to one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberTrace {
    pub subscription: u64,
    pub filter_passed: bool,
    pub hits: u32,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub event: String,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subscribers: Vec<SubscriberTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimelineEvent {
    Action {
        outcome: ActionOutcome,
        cause: Cause,
    },
    StateChanged {
        #[serde(flatten)]
        transition: StateTransition,
        action: String,
    },
    NotificationReceived {
        notification: Notification,
    },
    NotificationSent {
        event_name: String,
        to: String,
        delivered: bool,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        detail: String,
    },
    RemoteInvocation {
        target: String,
        action: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<ActionOutcome>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    SubscriberReset {
        event: String,
    },
    Tick {
        on_demand: bool,
        checks: Vec<CheckSummary>,
    },
}

impl TimelineEvent {
    /// Entries that describe adaptation rather than observation.
    pub fn is_adaptation(&self) -> bool {
        !matches!(self, TimelineEvent::Tick { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Timestamp,
    pub seq: u64,
    pub event: TimelineEvent,
}

/// Append-only log ordered by (timestamp, sequence).
#[derive(Debug, Clone, Default)]
pub struct Timeline {
    entries: Vec<TimelineEntry>,
    next_seq: u64,
}

impl Timeline {
    pub fn push(&mut self, at: Timestamp, event: TimelineEvent) {
        // A late writer (real-clock mode) never reorders earlier entries.
        let at = self.entries.last().map_or(at, |last| last.at.max(at));
        self.entries.push(TimelineEntry {
            at,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
    }

    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of checking one event during a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCheck {
    pub event: String,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<MetricsSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub subscribers: Vec<SubscriberTrace>,
    pub outcomes: Vec<ActionOutcome>,
}

impl EventCheck {
    pub fn summary(&self) -> CheckSummary {
        CheckSummary {
            event: self.event.clone(),
            verdict: self.verdict,
            error: self.error.clone(),
            subscribers: self.subscribers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub node: String,
    pub at: Timestamp,
    pub on_demand: bool,
    pub checks: Vec<EventCheck>,
}

impl TickReport {
    pub fn outcomes(&self) -> impl Iterator<Item = &ActionOutcome> {
        self.checks.iter().flat_map(|c| c.outcomes.iter())
    }

    pub fn check(&self, event: &str) -> Option<&EventCheck> {
        self.checks.iter().find(|c| c.event == event)
    }
}
