use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_nodes, resolve_profile, AssertionResult, ScenarioError, ScenarioSpec};
use crate::loadgen::{arrival_schedule, drive_live, run_virtual, FaultRecord, RequestLog};
use crate::mesh::{Cause, Mesh, TimelineEntry, TimelineEvent, TransportKind};
use crate::scheduler::{
    interval_from_env, resolve_interval, run_live, Clock, Scheduler, SystemClock, Timestamp, VirtualClock,
};
use crate::sim::{AdaptationState, ResponseClass, ServiceRole, StateTransition};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub horizon_s: f64,
    pub seed: u64,
    /// Overrides the environment and the document.
    pub interval_ms: Option<u64>,
    /// Overrides the document's profile.
    pub profile: Option<String>,
    pub transport: TransportKind,
    /// Real clock, socket-free scheduling on threads.
    pub live: bool,
    /// Directory that relative profile paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            horizon_s: 300.0,
            seed: 0,
            interval_ms: None,
            profile: None,
            transport: TransportKind::Loopback,
            live: false,
            base_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub total: usize,
    pub by_class: BTreeMap<ResponseClass, usize>,
}

impl From<&RequestLog> for RequestSummary {
    fn from(log: &RequestLog) -> Self {
        Self {
            total: log.len(),
            by_class: log.counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub role: ServiceRole,
    pub final_state: AdaptationState,
    pub timeline: Vec<TimelineEntry>,
}

impl NodeReport {
    pub fn transitions(&self) -> Vec<(Timestamp, StateTransition)> {
        self.timeline
            .iter()
            .filter_map(|e| match &e.event {
                TimelineEvent::StateChanged { transition, .. } => Some((e.at, transition.clone())),
                _ => None,
            })
            .collect()
    }

    /// Replays state transitions up to and including `at`.
    pub fn state_at(&self, at: Timestamp) -> AdaptationState {
        let mut state = AdaptationState::default();
        for (t, tr) in self.transitions() {
            if t > at {
                break;
            }
            state.set(tr.flag, tr.to);
        }
        state
    }
}

/// Everything observable about one run. Virtual runs with equal inputs
/// serialise to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub interval_ms: u64,
    pub live: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub requests: RequestSummary,
    pub faults: Vec<FaultRecord>,
    pub nodes: BTreeMap<String, NodeReport>,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))
    }

    pub fn node(&self, id: &str) -> Option<&NodeReport> {
        self.nodes.get(id)
    }

    pub fn transitions(&self, node: &str) -> Vec<(Timestamp, StateTransition)> {
        self.nodes.get(node).map(NodeReport::transitions).unwrap_or_default()
    }

    /// Human-readable adaptation log across all nodes, ordered by time.
    pub fn render_timeline(&self) -> String {
        let mut rows: Vec<(Timestamp, &str, u64, String)> = Vec::new();
        for (id, node) in &self.nodes {
            for e in &node.timeline {
                if let Some(text) = describe(&e.event) {
                    rows.push((e.at, id, e.seq, text));
                }
            }
        }
        rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let width = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (at, id, _, text) in rows {
            let _ = writeln!(out, "{:>10}  {id:<width$}  {text}", at.to_string());
        }
        out
    }
}

fn describe(event: &TimelineEvent) -> Option<String> {
    Some(match event {
        TimelineEvent::Action { outcome, cause } => {
            let why = match cause {
                Cause::Subscription { event } => format!("on {event}"),
                Cause::Notification { event, origin } => format!("on {event} from {origin}"),
                Cause::Remote { origin: Some(o) } => format!("invoked by {o}"),
                Cause::Remote { origin: None } => "invoked remotely".into(),
                Cause::Direct => "direct".into(),
                Cause::Deferred => "deferred".into(),
            };
            format!("{} {:?} ({why})", outcome.action_id, outcome.status)
        }
        TimelineEvent::StateChanged { transition, action } => format!(
            "  {}: {} -> {} [{action}]",
            transition.flag.name(),
            transition.from,
            transition.to
        ),
        TimelineEvent::NotificationReceived { notification } => {
            format!("received {} from {}", notification.event_name, notification.origin)
        }
        TimelineEvent::NotificationSent {
            event_name,
            to,
            delivered,
            ..
        } => {
            format!(
                "sent {event_name} to {to}{}",
                if *delivered { "" } else { " (undelivered)" }
            )
        }
        TimelineEvent::RemoteInvocation {
            target, action, error, ..
        } => match error {
            Some(e) => format!("invoke {target}:{action} failed: {e}"),
            None => format!("invoke {target}:{action}"),
        },
        TimelineEvent::SubscriberReset { event } => format!("reset subscribers of {event}"),
        TimelineEvent::Tick { .. } => return None,
    })
}

/// Runs on the virtual clock over loopback.
pub fn run_scenario(spec: &ScenarioSpec, horizon_s: f64, seed: u64) -> Result<ScenarioReport, ScenarioError> {
    run_with(
        spec,
        &RunOptions {
            horizon_s,
            seed,
            ..RunOptions::default()
        },
    )
}

pub fn run_with(spec: &ScenarioSpec, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    let doc = &spec.document;
    let interval_ms = resolve_interval(opts.interval_ms, interval_from_env()?, doc.interval_ms);
    let profile_ref = opts.profile.clone().or_else(|| doc.profile.clone());
    let profile = profile_ref
        .as_deref()
        .map(|r| resolve_profile(r, opts.base_dir.as_deref()))
        .transpose()?;
    let faults = spec.timed_faults()?;
    let horizon_s = opts.horizon_s.max(0.0);
    let until = Timestamp::from_secs_f64(horizon_s);
    let arrivals = profile
        .as_ref()
        .map(|p| arrival_schedule(p, Timestamp::ZERO, horizon_s, opts.seed, doc.jitter))
        .unwrap_or_default();

    let (mesh, requests, fault_log) = if opts.live {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let mesh = Mesh::start(build_nodes(spec, clock.clone(), interval_ms)?, opts.transport)?;
        let nodes: Vec<_> = mesh.nodes().cloned().collect();
        let stop = Arc::new(AtomicBool::new(false));
        let ticker = {
            let (clock, stop) = (clock.clone(), stop.clone());
            std::thread::spawn(move || run_live(&nodes, clock, until, stop))
        };
        let (requests, faults) = drive_live(&mesh, clock.as_ref(), &arrivals, &faults, until);
        stop.store(true, Ordering::Relaxed);
        let _ = ticker.join();
        (mesh, requests, faults)
    } else {
        let clock = Arc::new(VirtualClock::new(Timestamp::ZERO));
        let mesh = Mesh::start(build_nodes(spec, clock.clone(), interval_ms)?, opts.transport)?;
        let mut scheduler = Scheduler::new(Timestamp::ZERO);
        for node in mesh.nodes() {
            scheduler.add(node.clone())?;
        }
        let log = run_virtual(&mesh, &mut scheduler, &clock, &arrivals, &faults, until);
        (mesh, log.requests, log.faults)
    };

    let nodes: BTreeMap<String, NodeReport> = mesh
        .nodes()
        .map(|n| {
            (
                n.id().to_string(),
                NodeReport {
                    role: n.role(),
                    final_state: n.state(),
                    timeline: n.timeline(),
                },
            )
        })
        .collect();
    drop(mesh);
    let assertions: Vec<AssertionResult> = doc.assertions.iter().map(|a| a.check(nodes.get(a.node()))).collect();
    Ok(ScenarioReport {
        scenario: doc.name.clone(),
        seed: opts.seed,
        horizon_s,
        interval_ms,
        live: opts.live,
        profile: profile.map(|p| p.name),
        requests: RequestSummary::from(&requests),
        faults: fault_log,
        passed: assertions.iter().all(|a| a.passed),
        nodes,
        assertions,
    })
}
