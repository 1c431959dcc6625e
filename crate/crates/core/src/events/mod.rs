//! Condition evaluators, conditional events and subscriptions: the small
//! rule layer standing in for the Analyze and Plan phases.

mod evaluators;

use std::fmt;
use std::num::NonZeroU32;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsSample;

pub use evaluators::{
    Combinator, Comparison, ConstantEvaluator, DDoSEvaluator, DecreaseResourceUsageEvaluator, FlagEvaluator,
    HealthyDatabaseEvaluator, IncreaseResourceUsageEvaluator, NonDDoSEvaluator, ThresholdEvaluator,
    UnHealthyDatabaseEvaluator, CPU_HIGH, DATABASE_TIMEOUT_MS, DDOS_RATE_THRESHOLD, MEMORY_HIGH, RECOVERY_LOW,
};

/// Prefix under which a node exposes its adaptation flags to subscription
/// filters, e.g. `state.ddos_armed`.
pub const STATE_KEY_PREFIX: &str = "state.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("duplicate event `{0}`")]
    DuplicateEvent(String),
    #[error("duplicate evaluator id `{0}`")]
    DuplicateEvaluator(String),
    #[error("unknown evaluator `{0}`")]
    UnknownEvaluator(String),
    #[error("unknown collector `{0}`")]
    UnknownCollector(String),
    #[error("unknown action `{0}` in subscription")]
    UnknownAction(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("invalid subscription: {0}")]
    InvalidSubscription(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(u64),
}

/// A deterministic, side-effect free predicate over a metrics sample.
pub trait ConditionEvaluator: Send + Sync {
    fn evaluate(&self, sample: &MetricsSample) -> bool;

    fn describe(&self) -> String;
}

pub fn evaluate(evaluator: &dyn ConditionEvaluator, sample: &MetricsSample) -> bool {
    evaluator.evaluate(sample)
}

/// Named binding of one collector to one evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalEvent {
    pub name: String,
    /// Human-readable context such as `database_unavailable`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub collector: String,
    pub evaluator: String,
}

impl ConditionalEvent {
    pub fn new(name: &str, collector: &str, evaluator: &str) -> Self {
        Self {
            name: name.to_string(),
            label: None,
            collector: collector.to_string(),
            evaluator: evaluator.to_string(),
        }
    }

    pub fn labelled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    /// Act on the first trigger.
    Immediate,
    /// Act after `n` triggers; with `consecutive`, any miss restarts the count.
    Count { n: NonZeroU32, consecutive: bool },
}

impl Strategy {
    pub fn count(n: u32, consecutive: bool) -> Option<Strategy> {
        NonZeroU32::new(n).map(|n| Strategy::Count { n, consecutive })
    }

    fn threshold(self) -> (u32, bool) {
        match self {
            Strategy::Immediate => (1, true),
            Strategy::Count { n, consecutive } => (n.get(), consecutive),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Immediate => f.write_str("immediate"),
            Strategy::Count { n, consecutive: true } => write!(f, "count({n}, consecutive)"),
            Strategy::Count { n, consecutive: false } => write!(f, "count({n})"),
        }
    }
}

/// Where a subscription action runs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionTarget {
    Local(String),
    Remote { node: String, action: String },
}

impl ActionTarget {
    /// Parses `Action` or `node:Action`.
    pub fn parse(s: &str) -> ActionTarget {
        match s.split_once(':') {
            Some((node, action)) => ActionTarget::Remote {
                node: node.to_string(),
                action: action.to_string(),
            },
            None => ActionTarget::Local(s.to_string()),
        }
    }

    pub fn action_id(&self) -> &str {
        match self {
            ActionTarget::Local(a) | ActionTarget::Remote { action: a, .. } => a,
        }
    }
}

impl fmt::Display for ActionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionTarget::Local(a) => f.write_str(a),
            ActionTarget::Remote { node, action } => write!(f, "{node}:{action}"),
        }
    }
}

impl Serialize for ActionTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(ActionTarget::parse(&String::deserialize(d)?))
    }
}

/// Registration of actions against an event.
#[derive(Clone)]
pub struct Subscription {
    pub event_name: String,
    pub actions: Vec<ActionTarget>,
    /// Extra gate evaluated on the evidence sample plus `state.*` flags.
    pub filter: Option<Arc<dyn ConditionEvaluator>>,
    pub strategy: Strategy,
    /// Start latched, so the subscription acts only after a reset. Used by
    /// recovery subscriptions while the node is already in its normal state.
    pub initially_latched: bool,
    /// Events whose subscribers are re-armed when this one fires.
    pub resets: Vec<String>,
    /// Clears the node's DDoS arming flag when this subscription fires.
    pub disarm: bool,
}

impl fmt::Debug for Subscription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subscription")
            .field("event_name", &self.event_name)
            .field("actions", &self.actions)
            .field("filter", &self.filter.as_ref().map(|e| e.describe()))
            .field("strategy", &self.strategy)
            .field("initially_latched", &self.initially_latched)
            .field("resets", &self.resets)
            .field("disarm", &self.disarm)
            .finish()
    }
}

impl Subscription {
    pub fn new(event_name: &str, actions: &[&str], strategy: Strategy) -> Self {
        Self {
            event_name: event_name.to_string(),
            actions: actions.iter().map(|a| ActionTarget::parse(a)).collect(),
            filter: None,
            strategy,
            initially_latched: false,
            resets: Vec::new(),
            disarm: false,
        }
    }

    pub fn with_filter(mut self, filter: Arc<dyn ConditionEvaluator>) -> Self {
        self.filter = Some(filter);
        self
    }

    pub fn latched(mut self) -> Self {
        self.initially_latched = true;
        self
    }

    pub fn resetting(mut self, events: &[&str]) -> Self {
        self.resets = events.iter().map(|e| e.to_string()).collect();
        self
    }

    pub fn disarming(mut self) -> Self {
        self.disarm = true;
        self
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.actions.is_empty() {
            return Err(EventError::InvalidSubscription(format!(
                "subscription to `{}` has no actions",
                self.event_name
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SubscriberState {
        SubscriberState {
            consecutive_hits: 0,
            fired: self.initially_latched,
        }
    }
}

/// Counting state of one subscription.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberState {
    pub consecutive_hits: u32,
    /// Latched after firing until reset.
    pub fired: bool,
}

/// Result of feeding one evaluation to a subscriber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    /// Count reached by this evaluation (before the post-fire reset).
    pub hits: u32,
    pub fire: bool,
}

impl SubscriberState {
    /// Advances the state by one evaluation; `hit` is the event verdict
    /// combined with the subscription filter.
    pub fn observe(&mut self, strategy: Strategy, hit: bool) -> Step {
        let (n, consecutive) = strategy.threshold();
        if !hit {
            if consecutive {
                self.consecutive_hits = 0;
            }
            return Step {
                hits: self.consecutive_hits,
                fire: false,
            };
        }
        if self.fired {
            return Step {
                hits: self.consecutive_hits,
                fire: false,
            };
        }
        self.consecutive_hits += 1;
        let hits = self.consecutive_hits;
        if hits >= n {
            self.fired = true;
            self.consecutive_hits = 0;
            return Step { hits, fire: true };
        }
        Step { hits, fire: false }
    }

    pub fn reset(&mut self) {
        *self = SubscriberState::default();
    }
}
