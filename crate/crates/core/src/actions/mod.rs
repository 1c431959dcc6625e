//! Actuation abstraction: named, idempotent adaptation actions and the
//! per-node registry through which they are invoked.

mod builtin;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Notification;
use crate::metrics::MetricsSample;
use crate::scheduler::Timestamp;
use crate::sim::AdaptationState;

pub use builtin::{builtin_action, role_catalog, BroadcastEvent, LoggingActuator, SetFlag, BUILTIN_ACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLevel {
    Business,
    Infrastructure,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    #[default]
    Sync,
    /// Applied at the start of the node's next tick.
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Applied,
    AlreadyInState,
    Failed,
    /// Queued for the next tick (async actions).
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action_id: String,
    pub status: OutcomeStatus,
    pub applied_at: Timestamp,
    pub detail: String,
}

impl ActionOutcome {
    pub fn new(action_id: &str, status: OutcomeStatus, at: Timestamp, detail: impl Into<String>) -> Self {
        Self {
            action_id: action_id.to_string(),
            status,
            applied_at: at,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ActionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.action_id, self.status)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("duplicate action id `{0}`")]
    DuplicateActionId(String),
    #[error("action `{}` failed: {}", .0.action_id, .0.detail)]
    ActionFailed(ActionOutcome),
    #[error("target `{0}` unreachable")]
    TargetUnreachable(String),
}

/// Messages an action wants sent once the node's critical section ends.
#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    Broadcast(Notification),
}

/// What an action did to the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Changed(String),
    Unchanged,
    /// No local state change, but something was emitted (a broadcast, a log).
    Emitted(String),
}

pub struct ActionContext<'a> {
    pub node: &'a str,
    pub now: Timestamp,
    pub state: &'a mut AdaptationState,
    pub outbox: &'a mut Vec<Outbound>,
    /// The sample that caused the action, when there is one.
    pub evidence: Option<&'a MetricsSample>,
}

/// An adaptation actuator. `apply` must be idempotent with respect to
/// adaptation state; returning `Err` reports a failed actuation.
pub trait AdaptationAction: Send + Sync {
    fn id(&self) -> &str;

    fn level(&self) -> ActionLevel;

    fn mode(&self) -> ExecutionMode {
        ExecutionMode::Sync
    }

    /// The action that undoes this one, e.g. `EnableCache` / `DisableCache`.
    fn inverse(&self) -> Option<&str> {
        None
    }

    fn apply(&self, ctx: &mut ActionContext<'_>) -> Result<Effect, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionListing {
    pub id: String,
    pub level: ActionLevel,
    pub mode: ExecutionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<String>,
}

/// Registered actions of one node, listed in registration order.
#[derive(Default, Clone)]
pub struct ActionRegistry {
    order: Vec<String>,
    actions: BTreeMap<String, Arc<dyn AdaptationAction>>,
}

impl ActionRegistry {
    pub fn register(&mut self, action: Arc<dyn AdaptationAction>) -> Result<(), ActionError> {
        let id = action.id().to_string();
        if self.actions.contains_key(&id) {
            return Err(ActionError::DuplicateActionId(id));
        }
        self.order.push(id.clone());
        self.actions.insert(id, action);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn AdaptationAction>> {
        self.actions.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.actions.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn listing(&self) -> Vec<ActionListing> {
        self.order
            .iter()
            .map(|id| {
                let a = &self.actions[id];
                ActionListing {
                    id: id.clone(),
                    level: a.level(),
                    mode: a.mode(),
                    inverse: a.inverse().map(str::to_string),
                }
            })
            .collect()
    }

    /// (action, inverse) pairs where both sides are registered.
    pub fn inverse_pairs(&self) -> Vec<(String, String)> {
        self.order
            .iter()
            .filter_map(|id| {
                let inv = self.actions[id].inverse()?;
                self.contains(inv).then(|| (id.clone(), inv.to_string()))
            })
            .collect()
    }
}

/// Runs `action` against `ctx`, mapping its effect onto an outcome.
pub fn run_action(action: &dyn AdaptationAction, ctx: &mut ActionContext<'_>) -> ActionOutcome {
    let now = ctx.now;
    match action.apply(ctx) {
        Ok(Effect::Changed(detail)) | Ok(Effect::Emitted(detail)) => {
            ActionOutcome::new(action.id(), OutcomeStatus::Applied, now, detail)
        }
        Ok(Effect::Unchanged) => ActionOutcome::new(action.id(), OutcomeStatus::AlreadyInState, now, ""),
        Err(e) => ActionOutcome::new(action.id(), OutcomeStatus::Failed, now, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{PowerMode, ServiceRole};

    fn apply(id: &str, state: &mut AdaptationState, outbox: &mut Vec<Outbound>) -> ActionOutcome {
        let action = builtin_action(id).unwrap();
        let mut ctx = ActionContext {
            node: "n",
            now: Timestamp(7),
            state,
            outbox,
            evidence: None,
        };
        run_action(action.as_ref(), &mut ctx)
    }

    #[test]
    fn enable_cache_twice_is_already_in_state() {
        let mut state = AdaptationState::default();
        let mut outbox = vec![];
        assert_eq!(
            apply("EnableCache", &mut state, &mut outbox).status,
            OutcomeStatus::Applied
        );
        let second = apply("EnableCache", &mut state, &mut outbox);
        assert_eq!(second.status, OutcomeStatus::AlreadyInState);
        assert!(state.cache_enabled);
    }

    #[test]
    fn power_mode_round_trip_restores_state() {
        let mut state = AdaptationState::default();
        let before = state.clone();
        let mut outbox = vec![];
        apply("LowPowerMode", &mut state, &mut outbox);
        assert_eq!(state.power_mode, PowerMode::Low);
        apply("NormalMode", &mut state, &mut outbox);
        assert_eq!(state, before);
    }

    #[test]
    fn broadcast_emits_without_touching_state() {
        let mut state = AdaptationState::default();
        let mut outbox = vec![];
        let out = apply("DDoSAttackEventBroadcast", &mut state, &mut outbox);
        assert_eq!(out.status, OutcomeStatus::Applied);
        assert_eq!(state, AdaptationState::default());
        let Outbound::Broadcast(n) = &outbox[0];
        assert_eq!(n.event_name, "DDoSAttackEvent");
        assert_eq!(n.origin, "n");
    }

    #[test]
    fn registry_rejects_duplicates_and_lists_in_order() {
        let mut reg = ActionRegistry::default();
        for id in role_catalog(ServiceRole::Auth) {
            reg.register(builtin_action(id).unwrap()).unwrap();
        }
        assert_eq!(
            reg.register(builtin_action("OpenCircuitBreaker").unwrap()),
            Err(ActionError::DuplicateActionId("OpenCircuitBreaker".into()))
        );
        let ids: Vec<_> = reg.ids().collect();
        assert_eq!(ids, ["OpenCircuitBreaker", "CloseCircuitBreaker"]);
        assert_eq!(
            reg.inverse_pairs(),
            vec![
                ("OpenCircuitBreaker".to_string(), "CloseCircuitBreaker".to_string()),
                ("CloseCircuitBreaker".to_string(), "OpenCircuitBreaker".to_string())
            ]
        );
        assert_eq!(reg.listing()[0].level, ActionLevel::Business);
    }

    #[test]
    fn every_builtin_is_idempotent_and_invertible_from_every_state() {
        // Exhaustive over the reachable flag space.
        let mut states = vec![];
        for bits in 0u8..64 {
            states.push(AdaptationState {
                maintenance: bits & 1 != 0,
                circuit_open: bits & 2 != 0,
                cache_enabled: bits & 4 != 0,
                power_mode: if bits & 8 != 0 {
                    PowerMode::Low
                } else {
                    PowerMode::Normal
                },
                image_provider: if bits & 16 != 0 {
                    crate::sim::ImageProvider::External
                } else {
                    crate::sim::ImageProvider::Local
                },
                ddos_armed: bits & 32 != 0,
            });
        }
        for id in BUILTIN_ACTIONS {
            for s in &states {
                let mut once = s.clone();
                let mut outbox = vec![];
                apply(id, &mut once, &mut outbox);
                let mut twice = once.clone();
                let second = apply(id, &mut twice, &mut outbox);
                assert_eq!(once, twice, "{id} not idempotent");
                if second.status == OutcomeStatus::AlreadyInState {
                    assert_eq!(once, twice);
                }
                if let Some(inv) = builtin_action(id).unwrap().inverse().map(str::to_string) {
                    let mut restored = once.clone();
                    apply(&inv, &mut restored, &mut outbox);
                    // Inversion restores the flags the action touched.
                    for t in s.transitions_to(&once) {
                        assert_eq!(restored.get(t.flag), t.from, "{id}/{inv}");
                    }
                }
            }
        }
    }
}
