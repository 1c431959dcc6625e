use serde::{Deserialize, Serialize};

use super::runner::NodeReport;
use crate::actions::OutcomeStatus;
use crate::mesh::TimelineEvent;
use crate::scheduler::Timestamp;
use crate::sim::{FlagValue, StateFlag};

/// An expectation checked against a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    /// `action` was applied on `node` at some time in `[from_s, to_s]`.
    ActionAppliedWithin {
        node: String,
        action: String,
        from_s: f64,
        to_s: f64,
    },
    /// `action` was applied exactly `count` times.
    ActionCount { node: String, action: String, count: usize },
    /// No action was applied on `node`.
    NoAction { node: String },
    StateAt {
        node: String,
        at_s: f64,
        flag: StateFlag,
        value: FlagValue,
    },
    FinalState {
        node: String,
        flag: StateFlag,
        value: FlagValue,
    },
    /// Subscriptions to `event` fired exactly `count` times.
    FiredCount { node: String, event: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn node(&self) -> &str {
        match self {
            Assertion::ActionAppliedWithin { node, .. }
            | Assertion::ActionCount { node, .. }
            | Assertion::NoAction { node }
            | Assertion::StateAt { node, .. }
            | Assertion::FinalState { node, .. }
            | Assertion::FiredCount { node, .. } => node,
        }
    }

    pub fn check(&self, report: Option<&NodeReport>) -> AssertionResult {
        let (passed, detail) = match report {
            None => (false, format!("node `{}` not in report", self.node())),
            Some(r) => self.evaluate(r),
        };
        AssertionResult {
            assertion: self.clone(),
            passed,
            detail,
        }
    }

    fn evaluate(&self, r: &NodeReport) -> (bool, String) {
        match self {
            Assertion::ActionAppliedWithin {
                action, from_s, to_s, ..
            } => {
                let (from, to) = (Timestamp::from_secs_f64(*from_s), Timestamp::from_secs_f64(*to_s));
                let times = r.applied_times(action);
                let hit = times.iter().find(|t| **t >= from && **t <= to);
                match hit {
                    Some(t) => (true, format!("{action} applied at {t}")),
                    None => (false, format!("{action} applied at {times:?}, none in [{from}, {to}]")),
                }
            }
            Assertion::ActionCount { action, count, .. } => {
                let n = r.applied_times(action).len();
                (n == *count, format!("{action} applied {n} time(s)"))
            }
            Assertion::NoAction { .. } => {
                let n = r.applied_count();
                (n == 0, format!("{n} action(s) applied"))
            }
            Assertion::StateAt { at_s, flag, value, .. } => {
                let actual = r.state_at(Timestamp::from_secs_f64(*at_s)).get(*flag);
                (actual == *value, format!("{} = {actual}", flag.name()))
            }
            Assertion::FinalState { flag, value, .. } => {
                let actual = r.final_state.get(*flag);
                (actual == *value, format!("{} = {actual}", flag.name()))
            }
            Assertion::FiredCount { event, count, .. } => {
                let n = r.fired_count(event);
                (n == *count, format!("{event} fired {n} time(s)"))
            }
        }
    }
}

impl NodeReport {
    /// Times at which `action` was applied (not merely confirmed).
    pub fn applied_times(&self, action: &str) -> Vec<Timestamp> {
        self.timeline
            .iter()
            .filter_map(|e| match &e.event {
                TimelineEvent::Action { outcome, .. }
                    if outcome.action_id == action && outcome.status == OutcomeStatus::Applied =>
                {
                    Some(outcome.applied_at)
                }
                _ => None,
            })
            .collect()
    }

    pub fn applied_count(&self) -> usize {
        self.timeline
            .iter()
            .filter(|e| {
                matches!(&e.event, TimelineEvent::Action { outcome, .. } if outcome.status == OutcomeStatus::Applied)
            })
            .count()
    }

    /// Number of subscription firings recorded for `event`.
    pub fn fired_count(&self, event: &str) -> usize {
        self.timeline
            .iter()
            .filter_map(|e| match &e.event {
                TimelineEvent::Tick { checks, .. } => Some(checks),
                _ => None,
            })
            .flatten()
            .filter(|c| c.event == event)
            .map(|c| c.subscribers.iter().filter(|s| s.fired).count())
            .sum()
    }
}
