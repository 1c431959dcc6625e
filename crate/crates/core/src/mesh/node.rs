use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::timeline::{Cause, EventCheck, SubscriberTrace, TickReport, Timeline, TimelineEntry, TimelineEvent};
use super::transport::{deliver_notification, invoke_action};
use super::{MeshError, Method, Notification, Transport, WireRequest, WireResponse};
use crate::actions::{
    run_action, ActionContext, ActionError, ActionListing, ActionOutcome, ActionRegistry, AdaptationAction,
    ExecutionMode, Outbound, OutcomeStatus,
};
use crate::events::{
    ActionTarget, ConditionEvaluator, ConditionalEvent, EventError, Strategy, SubscriberState, Subscription,
    STATE_KEY_PREFIX,
};
use crate::metrics::{self, MetricValue, MetricsCollector, MetricsError, MetricsSample};
use crate::scheduler::{Clock, ObservationConfig, Timestamp};
use crate::sim::{
    handle_request, inject_fault, AdaptationState, Fault, FlagValue, Observables, ResponseCache, ResponseClass,
    ServiceError, ServiceRole, SharedObservables, SimRequest, SimResponse, StateFlag, StateTransition,
};

/// Failure hooks run at most once per event within this many milliseconds.
pub const FAILURE_HOOK_DEBOUNCE_MS: u64 = 1000;

/// Local reaction to an inbound notification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationBinding {
    pub event_name: String,
    #[serde(default)]
    pub actions: Vec<String>,
    /// Sets `ddos_armed`, enabling subscriptions filtered on it.
    #[serde(default)]
    pub arm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationAck {
    pub accepted: bool,
    pub outcomes: Vec<ActionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionInfo {
    pub id: u64,
    pub event: String,
    pub actions: Vec<ActionTarget>,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    pub state: SubscriberState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventListing {
    #[serde(flatten)]
    pub event: ConditionalEvent,
    pub subscriptions: Vec<SubscriptionInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventVerdict {
    pub triggered: bool,
    pub sample: MetricsSample,
}

struct Slot {
    id: u64,
    sub: Subscription,
    state: SubscriberState,
}

/// Work produced under the node lock and carried out after it is released.
enum Pending {
    Broadcast(Notification),
    Remote {
        node: String,
        action: String,
        slot: Option<(usize, usize)>,
    },
}

struct NodeCore {
    id: String,
    state: AdaptationState,
    cache: ResponseCache,
    collectors: BTreeMap<String, Box<dyn MetricsCollector>>,
    latest: BTreeMap<String, MetricsSample>,
    actions: ActionRegistry,
    failing: BTreeSet<String>,
    evaluators: BTreeMap<String, Arc<dyn ConditionEvaluator>>,
    events: Vec<ConditionalEvent>,
    slots: Vec<Slot>,
    next_subscription: u64,
    bindings: Vec<NotificationBinding>,
    failure_hooks: Vec<String>,
    last_hook: BTreeMap<String, Timestamp>,
    deferred: Vec<String>,
    timeline: Timeline,
    observation: ObservationConfig,
}

/// One instrumented service: registries, adaptation state, timeline and
/// simulated internals, all serialized behind a single lock.
pub struct ServiceNode {
    id: String,
    role: ServiceRole,
    clock: Arc<dyn Clock>,
    observables: SharedObservables,
    core: Mutex<NodeCore>,
    peers: RwLock<BTreeMap<String, String>>,
    transport: RwLock<Option<Arc<dyn Transport>>>,
    address: RwLock<Option<String>>,
}

impl ServiceNode {
    pub fn new(id: &str, role: ServiceRole, clock: Arc<dyn Clock>, observables: Observables) -> Self {
        Self {
            id: id.to_string(),
            role,
            clock,
            observables: observables.shared(),
            core: Mutex::new(NodeCore {
                id: id.to_string(),
                state: AdaptationState::default(),
                cache: ResponseCache::default(),
                collectors: BTreeMap::new(),
                latest: BTreeMap::new(),
                actions: ActionRegistry::default(),
                failing: BTreeSet::new(),
                evaluators: BTreeMap::new(),
                events: Vec::new(),
                slots: Vec::new(),
                next_subscription: 1,
                bindings: Vec::new(),
                failure_hooks: Vec::new(),
                last_hook: BTreeMap::new(),
                deferred: Vec::new(),
                timeline: Timeline::default(),
                observation: ObservationConfig::default(),
            }),
            peers: RwLock::new(BTreeMap::new()),
            transport: RwLock::new(None),
            address: RwLock::new(None),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> ServiceRole {
        self.role
    }

    pub fn observables(&self) -> &SharedObservables {
        &self.observables
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn register_collector(&self, collector: Box<dyn MetricsCollector>) -> Result<(), MetricsError> {
        metrics::validate_descriptors(collector.as_ref())?;
        let mut core = self.core.lock();
        let id = collector.id().to_string();
        if core.collectors.contains_key(&id) {
            return Err(MetricsError::DuplicateCollectorId(id));
        }
        core.collectors.insert(id, collector);
        Ok(())
    }

    pub fn register_action(&self, action: Arc<dyn AdaptationAction>) -> Result<(), ActionError> {
        self.core.lock().actions.register(action)
    }

    pub fn register_evaluator(&self, id: &str, evaluator: Arc<dyn ConditionEvaluator>) -> Result<(), EventError> {
        let mut core = self.core.lock();
        if core.evaluators.contains_key(id) {
            return Err(EventError::DuplicateEvaluator(id.to_string()));
        }
        core.evaluators.insert(id.to_string(), evaluator);
        Ok(())
    }

    pub fn register_event(&self, event: ConditionalEvent) -> Result<(), EventError> {
        let mut core = self.core.lock();
        if core.events.iter().any(|e| e.name == event.name) {
            return Err(EventError::DuplicateEvent(event.name));
        }
        if !core.collectors.contains_key(&event.collector) {
            return Err(EventError::UnknownCollector(event.collector));
        }
        if !core.evaluators.contains_key(&event.evaluator) {
            return Err(EventError::UnknownEvaluator(event.evaluator));
        }
        core.events.push(event);
        Ok(())
    }

    /// Registers a subscription and returns its id.
    pub fn subscribe(&self, subscription: Subscription) -> Result<u64, EventError> {
        let mut core = self.core.lock();
        core.validate_subscription(&subscription)?;
        let id = core.next_subscription;
        core.next_subscription += 1;
        let state = subscription.initial_state();
        core.slots.push(Slot {
            id,
            sub: subscription,
            state,
        });
        Ok(id)
    }

    /// Replaces a subscription in place. Its counting state starts over.
    pub fn update_subscription(&self, id: u64, subscription: Subscription) -> Result<(), EventError> {
        let mut core = self.core.lock();
        core.validate_subscription(&subscription)?;
        let slot = core
            .slots
            .iter_mut()
            .find(|s| s.id == id)
            .ok_or(EventError::UnknownSubscription(id))?;
        slot.state = subscription.initial_state();
        slot.sub = subscription;
        Ok(())
    }

    pub fn unsubscribe(&self, id: u64) -> Result<(), EventError> {
        let mut core = self.core.lock();
        let before = core.slots.len();
        core.slots.retain(|s| s.id != id);
        if core.slots.len() == before {
            return Err(EventError::UnknownSubscription(id));
        }
        Ok(())
    }

    pub fn bind_notification(&self, binding: NotificationBinding) -> Result<(), ActionError> {
        let mut core = self.core.lock();
        if let Some(a) = binding.actions.iter().find(|a| !core.actions.contains(a)) {
            return Err(ActionError::UnknownAction(a.clone()));
        }
        core.bindings.push(binding);
        Ok(())
    }

    /// Checks `event` on demand whenever a business request fails.
    pub fn add_failure_hook(&self, event: &str) -> Result<(), EventError> {
        let mut core = self.core.lock();
        if !core.events.iter().any(|e| e.name == event) {
            return Err(EventError::UnknownEvent(event.to_string()));
        }
        core.failure_hooks.push(event.to_string());
        Ok(())
    }

    pub fn set_observation(&self, config: ObservationConfig) {
        self.core.lock().observation = config;
    }

    pub fn observation(&self) -> ObservationConfig {
        self.core.lock().observation.clone()
    }

    /// Makes every later invocation of `action_id` fail (test hook).
    pub fn fail_action(&self, action_id: &str, failing: bool) {
        let mut core = self.core.lock();
        if failing {
            core.failing.insert(action_id.to_string());
        } else {
            core.failing.remove(action_id);
        }
    }

    pub fn add_peer(&self, id: &str, address: &str) -> Result<(), MeshError> {
        if id == self.id {
            return Err(MeshError::SelfPeer(id.to_string()));
        }
        self.peers.write().insert(id.to_string(), address.to_string());
        Ok(())
    }

    pub fn peers(&self) -> BTreeMap<String, String> {
        self.peers.read().clone()
    }

    pub fn set_transport(&self, transport: Arc<dyn Transport>) {
        *self.transport.write() = Some(transport);
    }

    pub fn set_address(&self, address: &str) {
        *self.address.write() = Some(address.to_string());
    }

    pub fn address(&self) -> Option<String> {
        self.address.read().clone()
    }

    pub fn state(&self) -> AdaptationState {
        self.core.lock().state.clone()
    }

    pub fn timeline(&self) -> Vec<TimelineEntry> {
        self.core.lock().timeline.entries().to_vec()
    }

    /// Adaptation-state transitions in timeline order.
    pub fn transitions(&self) -> Vec<(Timestamp, StateTransition)> {
        self.core
            .lock()
            .timeline
            .entries()
            .iter()
            .filter_map(|e| match &e.event {
                TimelineEvent::StateChanged { transition, .. } => Some((e.at, transition.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn actions(&self) -> Vec<ActionListing> {
        self.core.lock().actions.listing()
    }

    pub fn events(&self) -> Vec<EventListing> {
        let core = self.core.lock();
        core.events
            .iter()
            .map(|e| EventListing {
                event: e.clone(),
                subscriptions: core
                    .slots
                    .iter()
                    .filter(|s| s.sub.event_name == e.name)
                    .map(|s| SubscriptionInfo {
                        id: s.id,
                        event: e.name.clone(),
                        actions: s.sub.actions.clone(),
                        strategy: s.sub.strategy,
                        filter: s.sub.filter.as_ref().map(|f| f.describe()),
                        state: s.state,
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn subscriber_state(&self, id: u64) -> Option<SubscriberState> {
        self.core.lock().slots.iter().find(|s| s.id == id).map(|s| s.state)
    }

    pub fn latest_samples(&self) -> Vec<MetricsSample> {
        self.core.lock().latest.values().cloned().collect()
    }

    /// Collects a fresh sample from one collector.
    pub fn collect_metrics(&self, collector: &str, now: Timestamp) -> Result<MetricsSample, MetricsError> {
        let mut core = self.core.lock();
        core.collect(collector, now)
    }

    /// Samples the event's collector and evaluates it, without dispatching.
    pub fn check_event(&self, event: &str, now: Timestamp) -> Result<EventVerdict, MeshError> {
        let mut core = self.core.lock();
        let (triggered, sample) = core.check(event, now)?;
        Ok(EventVerdict { triggered, sample })
    }

    /// Feeds a triggered verdict for `event` to its subscribers.
    pub fn notify_subscribers(&self, event: &str, sample: &MetricsSample, now: Timestamp) -> Vec<ActionOutcome> {
        let mut out = Vec::new();
        let (_, mut outcomes) = {
            let mut core = self.core.lock();
            core.dispatch(event, true, sample, now, 0, &mut out)
        };
        for (slot, outcome) in self.flush(out, now) {
            if let Some((_, i)) = slot {
                outcomes[i] = outcome;
            }
        }
        outcomes
    }

    pub fn reset_subscriber(&self, event: &str) -> Result<(), EventError> {
        let mut core = self.core.lock();
        if !core.slots.iter().any(|s| s.sub.event_name == event) {
            return Err(EventError::UnknownEvent(event.to_string()));
        }
        for slot in core.slots.iter_mut().filter(|s| s.sub.event_name == event) {
            slot.state.reset();
        }
        Ok(())
    }

    /// One periodic observation cycle.
    pub fn tick(&self, now: Timestamp) -> TickReport {
        self.run_checks(None, now)
    }

    /// Single-event equivalent of [`ServiceNode::tick`].
    pub fn trigger_on_demand(&self, event: &str, now: Timestamp) -> Result<TickReport, EventError> {
        if !self.core.lock().events.iter().any(|e| e.name == event) {
            return Err(EventError::UnknownEvent(event.to_string()));
        }
        Ok(self.run_checks(Some(event), now))
    }

    fn run_checks(&self, only: Option<&str>, now: Timestamp) -> TickReport {
        let mut out = Vec::new();
        let checks = {
            let mut core = self.core.lock();
            if only.is_none() {
                core.run_deferred(now, &mut out);
            }
            let names = match only {
                Some(name) => vec![name.to_string()],
                None => core.observed_events(),
            };
            let checks: Vec<EventCheck> = names
                .iter()
                .enumerate()
                .map(|(i, name)| core.check_and_dispatch(name, now, i, &mut out))
                .collect();
            core.timeline.push(
                now,
                TimelineEvent::Tick {
                    on_demand: only.is_some(),
                    checks: checks.iter().map(EventCheck::summary).collect(),
                },
            );
            checks
        };
        let mut report = TickReport {
            node: self.id.clone(),
            at: now,
            on_demand: only.is_some(),
            checks,
        };
        for (slot, outcome) in self.flush(out, now) {
            if let Some((c, i)) = slot {
                report.checks[c].outcomes[i] = outcome;
            }
        }
        report
    }

    /// Applies a local action directly.
    pub fn apply_action(&self, action_id: &str, now: Timestamp) -> Result<ActionOutcome, ActionError> {
        self.apply_with_cause(action_id, now, Cause::Direct)
    }

    fn apply_with_cause(&self, action_id: &str, now: Timestamp, cause: Cause) -> Result<ActionOutcome, ActionError> {
        let mut out = Vec::new();
        let outcome = self.core.lock().apply(action_id, now, cause, None, &mut out)?;
        self.flush(out, now);
        if outcome.status == OutcomeStatus::Failed {
            return Err(ActionError::ActionFailed(outcome));
        }
        Ok(outcome)
    }

    /// Records an inbound notification and runs the hooks bound to it.
    pub fn receive_notification(&self, notification: &Notification, now: Timestamp) -> NotificationAck {
        let mut out = Vec::new();
        let outcomes = {
            let mut core = self.core.lock();
            core.timeline.push(
                now,
                TimelineEvent::NotificationReceived {
                    notification: notification.clone(),
                },
            );
            let bindings: Vec<NotificationBinding> = core
                .bindings
                .iter()
                .filter(|b| b.event_name == notification.event_name)
                .cloned()
                .collect();
            let mut outcomes = Vec::new();
            for binding in bindings {
                if binding.arm {
                    core.set_armed(true, now, &format!("arm:{}", binding.event_name));
                }
                for action in &binding.actions {
                    let cause = Cause::Notification {
                        event: notification.event_name.clone(),
                        origin: notification.origin.clone(),
                    };
                    outcomes.push(
                        core.apply(action, now, cause, None, &mut out)
                            .unwrap_or_else(|e| ActionOutcome::new(action, OutcomeStatus::Failed, now, e.to_string())),
                    );
                }
            }
            outcomes
        };
        self.flush(out, now);
        NotificationAck {
            accepted: true,
            outcomes,
        }
    }

    /// Serves one business request and records it as an arrival.
    pub fn serve_request(&self, request: &SimRequest, now: Timestamp) -> Result<SimResponse, ServiceError> {
        let mut out = Vec::new();
        let result = {
            let mut guard = self.core.lock();
            let core = &mut *guard;
            let result = {
                let mut obs = self.observables.lock();
                let result = handle_request(self.role, &core.state, &mut obs, &mut core.cache, request);
                obs.requests.record(now, request.client_ip, result.is_err());
                result
            };
            if ResponseClass::of(&result) == ResponseClass::Error {
                core.run_failure_hooks(now, &mut out);
            }
            result
        };
        if !out.is_empty() {
            self.flush(out, now);
        }
        result
    }

    /// Records an arrival without producing a response.
    pub fn record_arrival(&self, now: Timestamp, ip: IpAddr, error: bool) {
        let _core = self.core.lock();
        self.observables.lock().requests.record(now, ip, error);
    }

    pub fn inject_fault(&self, fault: &Fault) {
        let _core = self.core.lock();
        inject_fault(&mut self.observables.lock(), fault);
    }

    /// Carries out broadcasts and remote invocations queued under the lock.
    fn flush(&self, out: Vec<Pending>, now: Timestamp) -> Vec<(Option<(usize, usize)>, ActionOutcome)> {
        if out.is_empty() {
            return Vec::new();
        }
        let transport = self.transport.read().clone();
        let peers = self.peers();
        let mut results = Vec::new();
        let mut entries = Vec::new();
        for pending in out {
            match pending {
                Pending::Broadcast(notification) => {
                    for (peer, address) in &peers {
                        let result = match &transport {
                            Some(t) => deliver_notification(t.as_ref(), address, &notification),
                            None => Err(MeshError::NoTransport),
                        };
                        let (delivered, detail) = match result {
                            Ok(_) => (true, String::new()),
                            Err(e) => (false, e.to_string()),
                        };
                        entries.push(TimelineEvent::NotificationSent {
                            event_name: notification.event_name.clone(),
                            to: peer.clone(),
                            delivered,
                            detail,
                        });
                    }
                }
                Pending::Remote { node, action, slot } => {
                    let result = match (peers.get(&node), &transport) {
                        (Some(address), Some(t)) => invoke_action(t.as_ref(), address, &action, Some(&self.id)),
                        (None, _) => Err(ActionError::TargetUnreachable(format!("{node} is not a peer"))),
                        (_, None) => Err(ActionError::TargetUnreachable(MeshError::NoTransport.to_string())),
                    };
                    let (outcome, error) = match result {
                        Ok(o) => (o, None),
                        Err(ActionError::ActionFailed(o)) => {
                            (o.clone(), Some(format!("action `{}` failed", o.action_id)))
                        }
                        Err(e) => (
                            ActionOutcome::new(&action, OutcomeStatus::Failed, now, e.to_string()),
                            Some(e.to_string()),
                        ),
                    };
                    entries.push(TimelineEvent::RemoteInvocation {
                        target: node,
                        action,
                        outcome: error.is_none().then(|| outcome.clone()),
                        error,
                    });
                    results.push((slot, outcome));
                }
            }
        }
        let mut core = self.core.lock();
        for e in entries {
            core.timeline.push(now, e);
        }
        results
    }

    /// Answers one wire request. Both transports route through here.
    pub fn handle(&self, request: WireRequest) -> WireResponse {
        let now = self.clock.now();
        let segments = request.segments();
        match (request.method, segments.as_slice()) {
            (Method::Get, ["adaptiflow", "metrics"]) => WireResponse::ok(json!({
                "node": self.id,
                "samples": self.latest_samples(),
            })),
            (Method::Get, ["adaptiflow", "metrics", collector]) => match self.collect_metrics(collector, now) {
                Ok(sample) => WireResponse::ok(sample),
                Err(e @ MetricsError::UnknownCollector(_)) => WireResponse::error(404, e),
                Err(e @ MetricsError::CollectorUnavailable(_)) => WireResponse::error(503, e),
                Err(e) => WireResponse::error(500, e),
            },
            (Method::Get, ["adaptiflow", "actions"]) => WireResponse::ok(self.actions()),
            (Method::Post, ["adaptiflow", "actions", action]) => {
                let origin = request
                    .body
                    .as_ref()
                    .and_then(|b| b.get("origin"))
                    .and_then(Value::as_str)
                    .map(str::to_string);
                match self.apply_with_cause(action, now, Cause::Remote { origin }) {
                    Ok(outcome) => WireResponse::ok(outcome),
                    Err(e @ ActionError::UnknownAction(_)) => WireResponse::error(404, e),
                    Err(ActionError::ActionFailed(outcome)) => WireResponse::with_status(500, outcome),
                    Err(e) => WireResponse::error(502, e),
                }
            }
            (Method::Get, ["adaptiflow", "events"]) => WireResponse::ok(self.events()),
            (Method::Post, ["adaptiflow", "events", "notify"]) => {
                match request.body.map(serde_json::from_value::<Notification>) {
                    Some(Ok(n)) if !n.event_name.is_empty() => WireResponse::ok(self.receive_notification(&n, now)),
                    Some(Ok(_)) => WireResponse::error(400, "event_name must not be empty"),
                    Some(Err(e)) => WireResponse::error(400, e),
                    None => WireResponse::error(400, "missing notification body"),
                }
            }
            (Method::Post, ["sim", "fault"]) => self.handle_fault(request.body),
            (Method::Get, _) if !segments.is_empty() && segments[0] != "adaptiflow" => {
                let path = request.path.split('?').next().unwrap_or_default().to_string();
                match self.serve_request(&SimRequest::new(path), now) {
                    Ok(response) => WireResponse::ok(response),
                    Err(e @ ServiceError::NotFound { .. }) => WireResponse::with_status(404, e),
                    Err(e @ ServiceError::ServiceUnavailable) => WireResponse::with_status(503, e),
                    Err(e) => WireResponse::with_status(500, e),
                }
            }
            _ => WireResponse::error(404, format!("no route for {:?} {}", request.method, request.path)),
        }
    }

    fn handle_fault(&self, body: Option<Value>) -> WireResponse {
        let Some(body) = body else {
            return WireResponse::error(400, "missing fault body");
        };
        if let Some(target) = body.get("target").and_then(Value::as_str) {
            if target != self.id {
                return WireResponse::error(400, format!("fault targets `{target}`, this is `{}`", self.id));
            }
        }
        let Some(kind) = body.get("kind").and_then(Value::as_str) else {
            return WireResponse::error(400, "missing fault kind");
        };
        match Fault::from_parts(kind, body.get("param")) {
            Ok(fault) => {
                self.inject_fault(&fault);
                WireResponse::ok(json!({ "node": self.id, "applied": fault }))
            }
            Err(e) => WireResponse::error(400, e),
        }
    }
}

impl NodeCore {
    fn validate_subscription(&self, sub: &Subscription) -> Result<(), EventError> {
        sub.validate()?;
        if !self.events.iter().any(|e| e.name == sub.event_name) {
            return Err(EventError::UnknownEvent(sub.event_name.clone()));
        }
        for target in &sub.actions {
            if let ActionTarget::Local(a) = target {
                if !self.actions.contains(a) {
                    return Err(EventError::UnknownAction(a.clone()));
                }
            }
        }
        Ok(())
    }

    fn observed_events(&self) -> Vec<String> {
        if self.observation.observed_events.is_empty() {
            self.events.iter().map(|e| e.name.clone()).collect()
        } else {
            self.observation.observed_events.clone()
        }
    }

    fn collect(&mut self, id: &str, now: Timestamp) -> Result<MetricsSample, MetricsError> {
        let collector = self
            .collectors
            .get(id)
            .ok_or_else(|| MetricsError::UnknownCollector(id.to_string()))?;
        if let Some(last) = self.latest.get(id) {
            if now < last.collected_at {
                return Err(MetricsError::NonMonotonic {
                    collector: id.to_string(),
                    last: last.collected_at,
                    now,
                });
            }
        }
        let sample = metrics::collect(collector.as_ref(), &self.id, now)?;
        self.latest.insert(id.to_string(), sample.clone());
        Ok(sample)
    }

    fn check(&mut self, name: &str, now: Timestamp) -> Result<(bool, MetricsSample), MeshError> {
        let event = self
            .events
            .iter()
            .find(|e| e.name == name)
            .cloned()
            .ok_or_else(|| EventError::UnknownEvent(name.to_string()))?;
        let sample = self.collect(&event.collector, now)?;
        let evaluator = self
            .evaluators
            .get(&event.evaluator)
            .ok_or_else(|| EventError::UnknownEvaluator(event.evaluator.clone()))?;
        Ok((evaluator.evaluate(&sample), sample))
    }

    fn check_and_dispatch(&mut self, name: &str, now: Timestamp, index: usize, out: &mut Vec<Pending>) -> EventCheck {
        match self.check(name, now) {
            Ok((verdict, sample)) => {
                let (subscribers, outcomes) = self.dispatch(name, verdict, &sample, now, index, out);
                EventCheck {
                    event: name.to_string(),
                    verdict,
                    sample: Some(sample),
                    error: None,
                    subscribers,
                    outcomes,
                }
            }
            Err(e) => EventCheck {
                event: name.to_string(),
                verdict: false,
                sample: None,
                error: Some(e.to_string()),
                subscribers: Vec::new(),
                outcomes: Vec::new(),
            },
        }
    }

    /// The evidence sample plus this node's flags under `state.`.
    fn filter_view(&self, sample: &MetricsSample) -> MetricsSample {
        let mut view = sample.clone();
        for flag in StateFlag::ALL {
            let value = match self.state.get(flag) {
                FlagValue::Bool(b) => MetricValue::Bool(b),
                other => MetricValue::Text(other.to_string()),
            };
            view.values.insert(format!("{STATE_KEY_PREFIX}{}", flag.name()), value);
        }
        view
    }

    fn dispatch(
        &mut self,
        event: &str,
        verdict: bool,
        sample: &MetricsSample,
        now: Timestamp,
        check_index: usize,
        out: &mut Vec<Pending>,
    ) -> (Vec<SubscriberTrace>, Vec<ActionOutcome>) {
        let view = verdict.then(|| self.filter_view(sample));
        let mut traces = Vec::new();
        let mut outcomes = Vec::new();
        for i in 0..self.slots.len() {
            if self.slots[i].sub.event_name != event {
                continue;
            }
            let filter_passed = view
                .as_ref()
                .is_some_and(|v| self.slots[i].sub.filter.as_ref().is_none_or(|f| f.evaluate(v)));
            let strategy = self.slots[i].sub.strategy;
            let step = self.slots[i].state.observe(strategy, filter_passed);
            traces.push(SubscriberTrace {
                subscription: self.slots[i].id,
                filter_passed,
                hits: step.hits,
                fired: step.fire,
            });
            if !step.fire {
                continue;
            }
            let sub = self.slots[i].sub.clone();
            for target in &sub.actions {
                match target {
                    ActionTarget::Local(action) => {
                        let cause = Cause::Subscription {
                            event: event.to_string(),
                        };
                        outcomes.push(
                            self.apply(action, now, cause, Some(sample), out).unwrap_or_else(|e| {
                                ActionOutcome::new(action, OutcomeStatus::Failed, now, e.to_string())
                            }),
                        );
                    }
                    ActionTarget::Remote { node, action } => {
                        outcomes.push(ActionOutcome::new(
                            action,
                            OutcomeStatus::Deferred,
                            now,
                            format!("sent to {node}"),
                        ));
                        out.push(Pending::Remote {
                            node: node.clone(),
                            action: action.clone(),
                            slot: Some((check_index, outcomes.len() - 1)),
                        });
                    }
                }
            }
            for reset in &sub.resets {
                for slot in self.slots.iter_mut().filter(|s| &s.sub.event_name == reset) {
                    slot.state.reset();
                }
                self.timeline
                    .push(now, TimelineEvent::SubscriberReset { event: reset.clone() });
            }
            if sub.disarm {
                self.set_armed(false, now, "disarm");
            }
        }
        (traces, outcomes)
    }

    fn set_armed(&mut self, armed: bool, now: Timestamp, label: &str) {
        let before = self.state.clone();
        if self.state.set(StateFlag::DdosArmed, FlagValue::Bool(armed)) {
            for transition in before.transitions_to(&self.state) {
                self.timeline.push(
                    now,
                    TimelineEvent::StateChanged {
                        transition,
                        action: label.to_string(),
                    },
                );
            }
        }
    }

    fn apply(
        &mut self,
        action_id: &str,
        now: Timestamp,
        cause: Cause,
        evidence: Option<&MetricsSample>,
        out: &mut Vec<Pending>,
    ) -> Result<ActionOutcome, ActionError> {
        let action = self
            .actions
            .get(action_id)
            .cloned()
            .ok_or_else(|| ActionError::UnknownAction(action_id.to_string()))?;
        if self.failing.contains(action_id) {
            let outcome = ActionOutcome::new(action_id, OutcomeStatus::Failed, now, "injected failure");
            self.timeline.push(
                now,
                TimelineEvent::Action {
                    outcome: outcome.clone(),
                    cause,
                },
            );
            return Ok(outcome);
        }
        if action.mode() == ExecutionMode::Async && cause != Cause::Deferred {
            self.deferred.push(action_id.to_string());
            let outcome = ActionOutcome::new(action_id, OutcomeStatus::Deferred, now, "queued for next tick");
            self.timeline.push(
                now,
                TimelineEvent::Action {
                    outcome: outcome.clone(),
                    cause,
                },
            );
            return Ok(outcome);
        }
        let before = self.state.clone();
        let mut outbox = Vec::new();
        let outcome = {
            let mut ctx = ActionContext {
                node: &self.id,
                now,
                state: &mut self.state,
                outbox: &mut outbox,
                evidence,
            };
            run_action(action.as_ref(), &mut ctx)
        };
        out.extend(outbox.into_iter().map(|o| match o {
            Outbound::Broadcast(n) => Pending::Broadcast(n),
        }));
        self.timeline.push(
            now,
            TimelineEvent::Action {
                outcome: outcome.clone(),
                cause,
            },
        );
        for transition in before.transitions_to(&self.state) {
            self.timeline.push(
                now,
                TimelineEvent::StateChanged {
                    transition,
                    action: action_id.to_string(),
                },
            );
        }
        Ok(outcome)
    }

    fn run_deferred(&mut self, now: Timestamp, out: &mut Vec<Pending>) {
        for action in std::mem::take(&mut self.deferred) {
            if let Err(e) = self.apply(&action, now, Cause::Deferred, None, out) {
                tracing::warn!(node = %self.id, "deferred action dropped: {e}");
            }
        }
    }

    fn run_failure_hooks(&mut self, now: Timestamp, out: &mut Vec<Pending>) {
        for event in self.failure_hooks.clone() {
            let due = self
                .last_hook
                .get(&event)
                .is_none_or(|last| now.as_millis() >= last.as_millis() + FAILURE_HOOK_DEBOUNCE_MS);
            if !due {
                continue;
            }
            self.last_hook.insert(event.clone(), now);
            let check = self.check_and_dispatch(&event, now, 0, out);
            self.timeline.push(
                now,
                TimelineEvent::Tick {
                    on_demand: true,
                    checks: vec![check.summary()],
                },
            );
        }
    }
}
