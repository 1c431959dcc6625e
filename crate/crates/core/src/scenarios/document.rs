use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Assertion, ScenarioError};
use crate::actions::{builtin_action, role_catalog, AdaptationAction, BroadcastEvent, ExecutionMode, LoggingActuator};
use crate::events::{
    ActionTarget, Combinator, Comparison, ConditionEvaluator, ConditionalEvent, ConstantEvaluator, DDoSEvaluator,
    DecreaseResourceUsageEvaluator, FlagEvaluator, HealthyDatabaseEvaluator, IncreaseResourceUsageEvaluator,
    NonDDoSEvaluator, Strategy, Subscription, ThresholdEvaluator, UnHealthyDatabaseEvaluator,
};
use crate::loadgen::TimedFault;
use crate::mesh::{NotificationBinding, ServiceNode};
use crate::metrics::{
    LocalDatabaseMetricsCollector, LocalRequestMetricsCollector, MetricsCollector, ResourceUsageCollector,
};
use crate::scheduler::{Clock, ObservationConfig, ObservationMode, Timestamp};
use crate::sim::{AffineMap, Fault, Observables, RequestWindow, ServiceRole};

fn yes() -> bool {
    true
}

/// Declarative scenario wiring as found in `scenarios/*.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_ms: Option<u64>,
    /// Shipped profile name or a CSV path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default = "yes")]
    pub jitter: bool,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at_s: f64,
    pub target: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectorKind {
    LocalDatabase,
    LocalRequests,
    ResourceUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorSpec {
    pub id: String,
    pub kind: CollectorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomActionKind {
    Broadcast,
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAction {
    pub id: String,
    pub kind: CustomActionKind,
    /// Event name for broadcasts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default)]
    pub mode: ExecutionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<String>,
}

/// A built-in action id, or a custom broadcast/logging action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSpec {
    Builtin(String),
    Custom(CustomAction),
}

impl ActionSpec {
    pub fn id(&self) -> &str {
        match self {
            ActionSpec::Builtin(id) => id,
            ActionSpec::Custom(c) => &c.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSpec {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StrategySpec {
    Immediate,
    Count {
        n: u32,
        #[serde(default = "yes")]
        consecutive: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriptionSpec {
    pub event: String,
    /// `Action` or `node:Action`.
    pub actions: Vec<String>,
    pub strategy: StrategySpec,
    /// Evaluator id applied to the evidence sample plus `state.*` flags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    #[serde(default)]
    pub initially_latched: bool,
    #[serde(default)]
    pub resets: Vec<String>,
    #[serde(default)]
    pub disarm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveSpec {
    #[serde(default)]
    pub mode: ObservationMode,
    #[serde(default)]
    pub observed_events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceModelSpec {
    pub cpu: AffineMap,
    pub memory: AffineMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    /// Defaults to the role named by the id, or `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ServiceRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default)]
    pub collectors: Vec<CollectorSpec>,
    /// Defaults to the role's action catalogue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<ActionSpec>>,
    #[serde(default)]
    pub evaluators: Vec<EvaluatorSpec>,
    #[serde(default)]
    pub events: Vec<ConditionalEvent>,
    #[serde(default)]
    pub subscriptions: Vec<SubscriptionSpec>,
    #[serde(default)]
    pub notifications: Vec<NotificationBinding>,
    #[serde(default)]
    pub on_failure_check: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observe: Option<ObserveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_model: Option<ResourceModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_window_ms: Option<u64>,
}

impl NodeSpec {
    pub fn role(&self) -> ServiceRole {
        self.role.unwrap_or_else(|| ServiceRole::from_node_id(&self.id))
    }

    pub fn action_ids(&self) -> Vec<String> {
        match &self.actions {
            Some(list) => list.iter().map(|a| a.id().to_string()).collect(),
            None => role_catalog(self.role()).iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A scenario document whose references all resolve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub document: ScenarioDocument,
}

impl ScenarioSpec {
    pub fn name(&self) -> &str {
        &self.document.name
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.document.nodes.iter().find(|n| n.id == id)
    }

    /// Faults sorted by time; ties keep document order.
    pub fn timed_faults(&self) -> Result<Vec<TimedFault>, ScenarioError> {
        let mut out = Vec::new();
        for (i, f) in self.document.faults.iter().enumerate() {
            let fault = Fault::from_parts(&f.kind, f.param.as_ref()).map_err(|e| ScenarioError::InvalidFault {
                path: format!("faults[{i}]"),
                reason: e.to_string(),
            })?;
            out.push(TimedFault {
                at: Timestamp::from_secs_f64(f.at_s),
                target: f.target.clone(),
                fault,
            });
        }
        out.sort_by_key(|f| f.at);
        Ok(out)
    }

    /// The same scenario with one node removed, along with every fault,
    /// assertion and remote action that referred to it.
    pub fn without_node(&self, id: &str) -> ScenarioSpec {
        let mut doc = self.document.clone();
        doc.nodes.retain(|n| n.id != id);
        doc.faults.retain(|f| f.target != id);
        doc.assertions.retain(|a| a.node() != id);
        for node in &mut doc.nodes {
            for sub in &mut node.subscriptions {
                sub.actions
                    .retain(|a| !matches!(ActionTarget::parse(a), ActionTarget::Remote { node, .. } if node == id));
            }
            node.subscriptions.retain(|s| !s.actions.is_empty());
        }
        ScenarioSpec { document: doc }
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let document: ScenarioDocument = serde_json::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    validate(&document)?;
    Ok(ScenarioSpec { document })
}

fn unresolved(path: String) -> ScenarioError {
    ScenarioError::UnresolvedReference(path)
}

/// Checks every cross reference and threshold in the document.
pub fn validate(doc: &ScenarioDocument) -> Result<(), ScenarioError> {
    if doc.interval_ms == Some(0) {
        return Err(ScenarioError::InvalidThreshold("interval_ms".into()));
    }
    let mut node_ids = BTreeSet::new();
    for (i, n) in doc.nodes.iter().enumerate() {
        if !node_ids.insert(n.id.as_str()) {
            return Err(ScenarioError::Duplicate(format!("nodes[{i}].id")));
        }
    }
    let actions_of: BTreeMap<&str, Vec<String>> = doc.nodes.iter().map(|n| (n.id.as_str(), n.action_ids())).collect();
    for node in &doc.nodes {
        validate_node(node, &actions_of)?;
    }
    for (i, f) in doc.faults.iter().enumerate() {
        if !node_ids.contains(f.target.as_str()) {
            return Err(unresolved(format!("faults[{i}].target")));
        }
        if !f.at_s.is_finite() || f.at_s < 0.0 {
            return Err(ScenarioError::InvalidFault {
                path: format!("faults[{i}].at_s"),
                reason: "time must be a non-negative number".into(),
            });
        }
        Fault::from_parts(&f.kind, f.param.as_ref()).map_err(|e| ScenarioError::InvalidFault {
            path: format!("faults[{i}]"),
            reason: e.to_string(),
        })?;
    }
    for (i, a) in doc.assertions.iter().enumerate() {
        if !node_ids.contains(a.node()) {
            return Err(unresolved(format!("assertions[{i}].node")));
        }
    }
    Ok(())
}

fn validate_node(node: &NodeSpec, actions_of: &BTreeMap<&str, Vec<String>>) -> Result<(), ScenarioError> {
    let base = format!("nodes.{}", node.id);
    let mut seen = BTreeSet::new();
    for (i, c) in node.collectors.iter().enumerate() {
        if !seen.insert(c.id.as_str()) {
            return Err(ScenarioError::Duplicate(format!("{base}.collectors[{i}].id")));
        }
    }
    let actions = &actions_of[node.id.as_str()];
    if let Some(list) = &node.actions {
        let mut ids = BTreeSet::new();
        for (i, a) in list.iter().enumerate() {
            if !ids.insert(a.id()) {
                return Err(ScenarioError::Duplicate(format!("{base}.actions[{i}]")));
            }
            build_action(a, &format!("{base}.actions[{i}]"))?;
        }
    }
    let evaluators = build_evaluators(node, &base)?;
    let mut events = BTreeSet::new();
    for (i, e) in node.events.iter().enumerate() {
        let path = format!("{base}.events[{i}]");
        if !events.insert(e.name.as_str()) {
            return Err(ScenarioError::Duplicate(format!("{path}.name")));
        }
        if !seen.contains(e.collector.as_str()) {
            return Err(unresolved(format!("{path}.collector")));
        }
        if !evaluators.contains_key(&e.evaluator) {
            return Err(unresolved(format!("{path}.evaluator")));
        }
    }
    for (i, s) in node.subscriptions.iter().enumerate() {
        let path = format!("{base}.subscriptions[{i}]");
        if !events.contains(s.event.as_str()) {
            return Err(unresolved(format!("{path}.event")));
        }
        if s.actions.is_empty() {
            return Err(unresolved(format!("{path}.actions")));
        }
        for (j, a) in s.actions.iter().enumerate() {
            let ok = match ActionTarget::parse(a) {
                ActionTarget::Local(id) => actions.contains(&id),
                ActionTarget::Remote { node: peer, action } => {
                    peer != node.id && actions_of.get(peer.as_str()).is_some_and(|l| l.contains(&action))
                }
            };
            if !ok {
                return Err(unresolved(format!("{path}.actions[{j}]")));
            }
        }
        if let Some(f) = &s.filter {
            if !evaluators.contains_key(f) {
                return Err(unresolved(format!("{path}.filter")));
            }
        }
        for (j, r) in s.resets.iter().enumerate() {
            if !events.contains(r.as_str()) {
                return Err(unresolved(format!("{path}.resets[{j}]")));
            }
        }
        if let StrategySpec::Count { n: 0, .. } = s.strategy {
            return Err(ScenarioError::InvalidThreshold(format!("{path}.strategy.n")));
        }
    }
    for (i, b) in node.notifications.iter().enumerate() {
        if b.event_name.is_empty() {
            return Err(unresolved(format!("{base}.notifications[{i}].event_name")));
        }
        for (j, a) in b.actions.iter().enumerate() {
            if !actions.contains(a) {
                return Err(unresolved(format!("{base}.notifications[{i}].actions[{j}]")));
            }
        }
    }
    for (i, e) in node.on_failure_check.iter().enumerate() {
        if !events.contains(e.as_str()) {
            return Err(unresolved(format!("{base}.on_failure_check[{i}]")));
        }
    }
    if let Some(o) = &node.observe {
        for (i, e) in o.observed_events.iter().enumerate() {
            if !events.contains(e.as_str()) {
                return Err(unresolved(format!("{base}.observe.observed_events[{i}]")));
            }
        }
    }
    if let Some(m) = &node.resource_model {
        let finite = [m.cpu.base, m.cpu.per_rps, m.memory.base, m.memory.per_rps];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::InvalidThreshold(format!("{base}.resource_model")));
        }
    }
    if node.request_window_ms == Some(0) {
        return Err(ScenarioError::InvalidThreshold(format!("{base}.request_window_ms")));
    }
    Ok(())
}

fn build_action(spec: &ActionSpec, path: &str) -> Result<Arc<dyn AdaptationAction>, ScenarioError> {
    match spec {
        ActionSpec::Builtin(id) => builtin_action(id).ok_or_else(|| unresolved(path.to_string())),
        ActionSpec::Custom(c) => Ok(match c.kind {
            CustomActionKind::Broadcast => {
                let event = c.event.as_deref().ok_or_else(|| unresolved(format!("{path}.event")))?;
                let action = BroadcastEvent::new(&c.id, event);
                match &c.inverse {
                    Some(inv) => Arc::new(action.with_inverse(inv)),
                    None => Arc::new(action),
                }
            }
            CustomActionKind::Log => {
                let action = LoggingActuator::new(&c.id, c.mode);
                match &c.inverse {
                    Some(inv) => Arc::new(action.with_inverse(inv)),
                    None => Arc::new(action),
                }
            }
        }),
    }
}

/// Reads numeric parameter `key`, falling back to `default` when absent.
fn number(params: &Map<String, Value>, key: &str, default: Option<f64>, path: &str) -> Result<f64, ScenarioError> {
    let bad = || ScenarioError::InvalidThreshold(format!("{path}.params.{key}"));
    match params.get(key) {
        Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(bad),
        None => default.ok_or_else(bad),
    }
}

fn build_evaluator(
    spec: &EvaluatorSpec,
    path: &str,
    earlier: &BTreeMap<String, Arc<dyn ConditionEvaluator>>,
) -> Result<Arc<dyn ConditionEvaluator>, ScenarioError> {
    let p = &spec.params;
    let threshold = |e: Result<ThresholdEvaluator, _>| -> Result<Arc<dyn ConditionEvaluator>, ScenarioError> {
        e.map(|t| Arc::new(t) as Arc<dyn ConditionEvaluator>)
            .map_err(|_| ScenarioError::InvalidThreshold(format!("{path}.params")))
    };
    let reference = |id: &Value, at: String| -> Result<Arc<dyn ConditionEvaluator>, ScenarioError> {
        id.as_str()
            .and_then(|id| earlier.get(id).cloned())
            .ok_or_else(|| unresolved(at))
    };
    Ok(match spec.kind.as_str() {
        "threshold" => {
            let metric = p
                .get("metric")
                .and_then(Value::as_str)
                .ok_or_else(|| unresolved(format!("{path}.params.metric")))?;
            match p.get("comparison").and_then(Value::as_str) {
                Some("greater_than") => threshold(ThresholdEvaluator::greater_than(
                    metric,
                    number(p, "bound", None, path)?,
                ))?,
                Some("less_than") => threshold(ThresholdEvaluator::less_than(metric, number(p, "bound", None, path)?))?,
                Some("between") => threshold(ThresholdEvaluator::new(
                    metric,
                    Comparison::Between {
                        lower: number(p, "lower", None, path)?,
                        upper: number(p, "upper", None, path)?,
                    },
                ))?,
                _ => return Err(ScenarioError::InvalidThreshold(format!("{path}.params.comparison"))),
            }
        }
        "unhealthy_database" => Arc::new(UnHealthyDatabaseEvaluator {
            timeout_ms: number(
                p,
                "timeout_ms",
                Some(UnHealthyDatabaseEvaluator::default().timeout_ms),
                path,
            )?,
        }),
        "healthy_database" => Arc::new(HealthyDatabaseEvaluator {
            timeout_ms: number(
                p,
                "timeout_ms",
                Some(HealthyDatabaseEvaluator::default().timeout_ms),
                path,
            )?,
        }),
        "ddos" => Arc::new(DDoSEvaluator {
            max_rate: number(p, "max_rate", Some(DDoSEvaluator::default().max_rate), path)?,
        }),
        "non_ddos" => Arc::new(NonDDoSEvaluator {
            max_rate: number(p, "max_rate", Some(NonDDoSEvaluator::default().max_rate), path)?,
        }),
        "increase_resource_usage" => {
            let d = IncreaseResourceUsageEvaluator::default();
            Arc::new(IncreaseResourceUsageEvaluator {
                cpu_high: number(p, "cpu_high", Some(d.cpu_high), path)?,
                memory_high: number(p, "memory_high", Some(d.memory_high), path)?,
            })
        }
        "decrease_resource_usage" => {
            let d = DecreaseResourceUsageEvaluator::default();
            Arc::new(DecreaseResourceUsageEvaluator {
                cpu_low: number(p, "cpu_low", Some(d.cpu_low), path)?,
                memory_low: number(p, "memory_low", Some(d.memory_low), path)?,
            })
        }
        "flag" => Arc::new(FlagEvaluator {
            key: p
                .get("key")
                .and_then(Value::as_str)
                .ok_or_else(|| unresolved(format!("{path}.params.key")))?
                .to_string(),
            expected: p.get("expected").and_then(Value::as_bool).unwrap_or(true),
        }),
        "constant" => Arc::new(ConstantEvaluator(
            p.get("value").and_then(Value::as_bool).unwrap_or(false),
        )),
        "all" | "any" => {
            let ids = p
                .get("of")
                .and_then(Value::as_array)
                .ok_or_else(|| unresolved(format!("{path}.params.of")))?;
            let parts = ids
                .iter()
                .enumerate()
                .map(|(i, id)| reference(id, format!("{path}.params.of[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            Arc::new(if spec.kind == "all" {
                Combinator::All(parts)
            } else {
                Combinator::Any(parts)
            })
        }
        "not" => {
            let id = p.get("of").cloned().unwrap_or(Value::Null);
            Arc::new(Combinator::Not(reference(&id, format!("{path}.params.of"))?))
        }
        _ => return Err(unresolved(format!("{path}.kind"))),
    })
}

fn build_evaluators(
    node: &NodeSpec,
    base: &str,
) -> Result<BTreeMap<String, Arc<dyn ConditionEvaluator>>, ScenarioError> {
    let mut out = BTreeMap::new();
    for (i, spec) in node.evaluators.iter().enumerate() {
        let path = format!("{base}.evaluators[{i}]");
        if out.contains_key(&spec.id) {
            return Err(ScenarioError::Duplicate(format!("{path}.id")));
        }
        let e = build_evaluator(spec, &path, &out)?;
        out.insert(spec.id.clone(), e);
    }
    Ok(out)
}

fn strategy(spec: StrategySpec) -> Option<Strategy> {
    match spec {
        StrategySpec::Immediate => Some(Strategy::Immediate),
        StrategySpec::Count { n, consecutive } => Strategy::count(n, consecutive),
    }
}

/// Instantiates one node from its spec. The spec must have been validated.
pub fn build_node(spec: &NodeSpec, clock: Arc<dyn Clock>, interval_ms: u64) -> Result<Arc<ServiceNode>, ScenarioError> {
    let base = format!("nodes.{}", spec.id);
    let mut observables = Observables::default();
    if let Some(m) = &spec.resource_model {
        observables.resources.cpu = m.cpu;
        observables.resources.memory = m.memory;
    }
    if let Some(w) = spec.request_window_ms {
        observables.requests = RequestWindow::new(w);
    }
    let node = Arc::new(ServiceNode::new(&spec.id, spec.role(), clock, observables));
    let wiring = |e: String| ScenarioError::Wiring(format!("{base}: {e}"));
    for c in &spec.collectors {
        let shared = node.observables().clone();
        let collector: Box<dyn MetricsCollector> = match c.kind {
            CollectorKind::LocalDatabase => Box::new(LocalDatabaseMetricsCollector::new(c.id.clone(), shared)),
            CollectorKind::LocalRequests => Box::new(LocalRequestMetricsCollector::new(c.id.clone(), shared)),
            CollectorKind::ResourceUsage => Box::new(ResourceUsageCollector::new(c.id.clone(), shared)),
        };
        node.register_collector(collector).map_err(|e| wiring(e.to_string()))?;
    }
    let actions: Vec<ActionSpec> = match &spec.actions {
        Some(list) => list.clone(),
        None => role_catalog(spec.role())
            .iter()
            .map(|s| ActionSpec::Builtin(s.to_string()))
            .collect(),
    };
    for (i, a) in actions.iter().enumerate() {
        let action = build_action(a, &format!("{base}.actions[{i}]"))?;
        node.register_action(action).map_err(|e| wiring(e.to_string()))?;
    }
    let evaluators = build_evaluators(spec, &base)?;
    for (id, e) in &evaluators {
        node.register_evaluator(id, e.clone())
            .map_err(|e| wiring(e.to_string()))?;
    }
    for e in &spec.events {
        node.register_event(e.clone()).map_err(|e| wiring(e.to_string()))?;
    }
    for (i, s) in spec.subscriptions.iter().enumerate() {
        let path = format!("{base}.subscriptions[{i}]");
        let strategy =
            strategy(s.strategy).ok_or_else(|| ScenarioError::InvalidThreshold(format!("{path}.strategy.n")))?;
        let actions: Vec<&str> = s.actions.iter().map(String::as_str).collect();
        let mut sub = Subscription::new(&s.event, &actions, strategy);
        if let Some(f) = &s.filter {
            sub = sub.with_filter(
                evaluators
                    .get(f)
                    .cloned()
                    .ok_or_else(|| unresolved(format!("{path}.filter")))?,
            );
        }
        sub.initially_latched = s.initially_latched;
        sub.resets = s.resets.clone();
        sub.disarm = s.disarm;
        node.subscribe(sub).map_err(|e| wiring(e.to_string()))?;
    }
    for b in &spec.notifications {
        node.bind_notification(b.clone()).map_err(|e| wiring(e.to_string()))?;
    }
    for e in &spec.on_failure_check {
        node.add_failure_hook(e).map_err(|e| wiring(e.to_string()))?;
    }
    let observe = spec.observe.clone().unwrap_or(ObserveSpec {
        mode: ObservationMode::Periodic,
        observed_events: Vec::new(),
    });
    node.set_observation(ObservationConfig {
        interval_ms,
        mode: observe.mode,
        observed_events: observe.observed_events,
    });
    if let Some(a) = &spec.address {
        node.set_address(a);
    }
    Ok(node)
}

/// Instantiates every node of the scenario, in document order.
pub fn build_nodes(
    spec: &ScenarioSpec,
    clock: Arc<dyn Clock>,
    interval_ms: u64,
) -> Result<Vec<Arc<ServiceNode>>, ScenarioError> {
    spec.document
        .nodes
        .iter()
        .map(|n| build_node(n, clock.clone(), interval_ms))
        .collect()
}
