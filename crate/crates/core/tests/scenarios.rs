use std::collections::BTreeSet;

use adaptiflow::loadgen::parse_profile;
use adaptiflow::mesh::{TimelineEvent, TransportKind};
use adaptiflow::scenarios::{
    diff_timelines, load_scenario, load_shipped, resolve_profile, run_scenario, run_with, shipped_profile,
    CollectorKind, RunOptions, ScenarioDocument, ScenarioError, StrategySpec, SHIPPED_SCENARIOS,
};
use adaptiflow::scheduler::{ObservationMode, Timestamp};
use adaptiflow::sim::{AdaptationState, ResourceModel};
use serde_json::{json, Value};

fn shipped_json(name: &str) -> Value {
    serde_json::from_str(adaptiflow::scenarios::shipped_scenario(name).unwrap()).unwrap()
}

#[test]
fn shipped_scenarios_validate_and_pass() {
    for name in SHIPPED_SCENARIOS {
        let spec = load_shipped(name).unwrap();
        let report = run_scenario(&spec, 300.0, 1).unwrap();
        let failed: Vec<_> = report.assertions.iter().filter(|a| !a.passed).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}

#[test]
fn self_healing_declares_the_expected_components() {
    let spec = load_shipped("self_healing").unwrap();
    let doc = &spec.document;
    let collectors: BTreeSet<CollectorKind> = doc
        .nodes
        .iter()
        .flat_map(|n| n.collectors.iter().map(|c| c.kind))
        .collect();
    assert_eq!(collectors, BTreeSet::from([CollectorKind::LocalDatabase]));
    let actions: BTreeSet<String> = doc.nodes.iter().flat_map(|n| n.action_ids()).collect();
    for a in [
        "DatabaseAvailableEventBroadcast",
        "DatabaseUnavailableEventBroadcast",
        "EnableMaintenanceMode",
        "DisableMaintenanceMode",
        "EnableCache",
        "DisableCache",
        "LowPowerMode",
        "NormalMode",
    ] {
        assert!(actions.contains(a), "{a} missing");
    }
    let evaluators: BTreeSet<&str> = doc
        .nodes
        .iter()
        .flat_map(|n| n.evaluators.iter().map(|e| e.kind.as_str()))
        .collect();
    assert_eq!(evaluators, BTreeSet::from(["healthy_database", "unhealthy_database"]));
    let events: BTreeSet<&str> = doc
        .nodes
        .iter()
        .flat_map(|n| n.events.iter().map(|e| e.name.as_str()))
        .collect();
    assert_eq!(
        events,
        BTreeSet::from(["DatabaseAvailableEvent", "DatabaseUnavailableEvent"])
    );
    let persistence = spec.node("persistence").unwrap();
    assert_eq!(persistence.subscriptions.len(), 2);
    assert!(doc
        .nodes
        .iter()
        .all(|n| n.observe.as_ref().is_none_or(|o| o.mode == ObservationMode::Periodic)));
}

#[test]
fn self_protection_uses_three_central_and_two_local_checks() {
    let spec = load_shipped("self_protection").unwrap();
    for node in &spec.document.nodes {
        let malicious = node
            .subscriptions
            .iter()
            .find(|s| s.event == "MaliciousTrafficEvent")
            .unwrap();
        let n = if node.id == "webui" { 3 } else { 2 };
        assert_eq!(
            malicious.strategy,
            StrategySpec::Count { n, consecutive: true },
            "{}",
            node.id
        );
        assert_eq!(malicious.filter.is_some(), node.id != "webui");
    }
}

#[test]
fn unknown_evaluator_is_reported_with_its_path() {
    let mut doc = shipped_json("self_healing");
    doc["nodes"][0]["events"][1]["evaluator"] = json!("nope");
    match load_scenario(&doc.to_string()) {
        Err(ScenarioError::UnresolvedReference(path)) => assert_eq!(path, "nodes.persistence.events[1].evaluator"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_documents_are_rejected() {
    let base = shipped_json("self_healing");
    let mut bad_action = base.clone();
    bad_action["nodes"][0]["subscriptions"][0]["actions"][0] = json!("webui:Nope");
    assert!(matches!(
        load_scenario(&bad_action.to_string()),
        Err(ScenarioError::UnresolvedReference(p)) if p == "nodes.persistence.subscriptions[0].actions[0]"
    ));

    let mut threshold = base.clone();
    threshold["nodes"][0]["evaluators"][0] = json!({"id": "unhealthy-db", "kind": "threshold", "params": {"metric": "response_time_ms", "comparison": "greater_than"}});
    assert!(matches!(
        load_scenario(&threshold.to_string()),
        Err(ScenarioError::InvalidThreshold(_))
    ));

    let mut dup = base.clone();
    let first = dup["nodes"][0].clone();
    dup["nodes"].as_array_mut().unwrap().push(first);
    assert!(matches!(
        load_scenario(&dup.to_string()),
        Err(ScenarioError::Duplicate(_))
    ));

    let mut fault = base.clone();
    fault["faults"][0]["kind"] = json!("meteor");
    assert!(matches!(
        load_scenario(&fault.to_string()),
        Err(ScenarioError::InvalidFault { .. })
    ));

    let mut target = base;
    target["faults"][0]["target"] = json!("cart");
    assert!(
        matches!(load_scenario(&target.to_string()), Err(ScenarioError::UnresolvedReference(p)) if p == "faults[0].target")
    );

    assert!(matches!(load_scenario("{"), Err(ScenarioError::Malformed(_))));
}

#[test]
fn documents_round_trip_through_json() {
    for name in SHIPPED_SCENARIOS {
        let spec = load_shipped(name).unwrap();
        let text = serde_json::to_string(&spec.document).unwrap();
        let back: ScenarioDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec.document);
    }
}

#[test]
fn low_profile_never_triggers_optimisation() {
    // Oracle: the resource map evaluated at the profile's peak rate, which
    // bounds any trailing-window average of it.
    let profile = parse_profile(shipped_profile("increasingLowIntensity").unwrap()).unwrap();
    let peak = profile.points.iter().map(|p| p.rate).fold(0.0, f64::max);
    let (cpu, mem) = ResourceModel::default().usage(peak);
    assert!(cpu < 60.0 && mem < 80.0, "peak {peak} maps to cpu {cpu}, memory {mem}");

    let spec = load_shipped("self_optimization").unwrap();
    let report = run_with(
        &spec,
        &RunOptions {
            horizon_s: 300.0,
            profile: Some("increasingLowIntensity".into()),
            ..RunOptions::default()
        },
    )
    .unwrap();
    for (id, node) in &report.nodes {
        assert_eq!(node.applied_count(), 0, "{id} adapted under low load");
    }
}

#[test]
fn identical_seeds_give_an_empty_diff() {
    let spec = load_shipped("self_protection").unwrap();
    let a = run_scenario(&spec, 150.0, 3).unwrap();
    let b = run_scenario(&spec, 150.0, 3).unwrap();
    assert!(diff_timelines(&a, &b).is_empty());
}

#[test]
fn interval_changes_timestamps_not_final_states() {
    let mut spec = load_shipped("self_healing").unwrap();
    spec.document.faults.retain(|f| f.kind == "db_down");
    spec.document.faults[0].at_s = 22.0;
    spec.document.assertions.clear();
    // Polling only: a failed request would otherwise trigger the check early.
    for node in &mut spec.document.nodes {
        node.on_failure_check.clear();
    }
    let run = |interval| {
        run_with(
            &spec,
            &RunOptions {
                horizon_s: 60.0,
                interval_ms: Some(interval),
                ..RunOptions::default()
            },
        )
        .unwrap()
    };
    let (slow, fast) = (run(5000), run(1000));
    let finals = |r: &adaptiflow::scenarios::ScenarioReport| -> Vec<AdaptationState> {
        r.nodes.values().map(|n| n.final_state.clone()).collect()
    };
    assert_eq!(finals(&slow), finals(&fast));
    assert!(slow.node("webui").unwrap().final_state.maintenance);
    assert_eq!(slow.transitions("webui")[0].0, Timestamp(25_000));
    assert_eq!(fast.transitions("webui")[0].0, Timestamp(22_000));
    assert!(!diff_timelines(&slow, &fast).is_empty());
}

#[test]
fn healthy_versus_faulted_diff_is_the_adaptation() {
    let faulted = load_shipped("self_healing").unwrap();
    let mut healthy = faulted.clone();
    healthy.document.faults.clear();
    let a = run_scenario(&healthy, 120.0, 4).unwrap();
    let b = run_scenario(&faulted, 120.0, 4).unwrap();
    let adaptation: usize = b
        .nodes
        .values()
        .map(|n| n.timeline.iter().filter(|e| e.event.is_adaptation()).count())
        .sum();
    assert!(adaptation > 0);
    let diff = diff_timelines(&a, &b);
    let added = diff.lines.iter().filter(|l| l.starts_with("+ {")).count();
    let removed = diff.lines.iter().filter(|l| l.starts_with("- {")).count();
    assert_eq!(added, adaptation);
    assert_eq!(removed, 0);
}

#[test]
fn removing_a_node_drops_its_references() {
    let spec = load_shipped("self_healing").unwrap().without_node("webui");
    assert!(spec.node("webui").is_none());
    assert!(spec.document.assertions.iter().all(|a| a.node() != "webui"));
    let report = run_scenario(&spec, 100.0, 0).unwrap();
    assert!(report.passed);
    let sent = report.node("persistence").unwrap().timeline.iter().filter(|e| {
        matches!(&e.event, TimelineEvent::NotificationSent { event_name, .. } if event_name == "DatabaseUnavailableEvent")
    }).count();
    assert_eq!(sent, 3);
}

#[test]
fn profile_files_win_over_shipped_names() {
    let dir = std::env::temp_dir().join(format!("adaptiflow-profile-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("increasingLowIntensity.csv"), "0,1\n10,2\n").unwrap();
    let local = resolve_profile("increasingLowIntensity.csv", Some(&dir)).unwrap();
    assert_eq!(local.points.len(), 2);
    let shipped = resolve_profile("increasingLowIntensity", None).unwrap();
    assert_eq!(shipped.points.len(), 6);
    assert!(matches!(
        resolve_profile("flatline", None),
        Err(ScenarioError::UnknownProfile(_))
    ));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn live_socket_run_orders_transitions_like_virtual_time() {
    let mut doc = shipped_json("self_healing");
    doc["interval_ms"] = json!(150);
    doc["profile"] = Value::Null;
    doc["faults"] = json!([
        {"at_s": 0.4, "target": "persistence", "kind": "db_down"},
        {"at_s": 1.2, "target": "persistence", "kind": "db_up"}
    ]);
    doc["assertions"] = json!([
        {"kind": "final_state", "node": "webui", "flag": "maintenance", "value": false},
        {"kind": "action_count", "node": "webui", "action": "EnableMaintenanceMode", "count": 1}
    ]);
    let spec = load_scenario(&doc.to_string()).unwrap();
    let opts = |live, transport| RunOptions {
        horizon_s: 1.8,
        live,
        transport,
        ..RunOptions::default()
    };
    let live = run_with(&spec, &opts(true, TransportKind::Socket)).unwrap();
    let virt = run_with(&spec, &opts(false, TransportKind::Loopback)).unwrap();
    assert!(live.live && live.passed, "{:?}", live.assertions);
    for id in virt.nodes.keys() {
        let order = |r: &adaptiflow::scenarios::ScenarioReport| -> Vec<_> {
            r.transitions(id).into_iter().map(|(_, t)| t).collect()
        };
        assert_eq!(order(&live), order(&virt), "{id}");
    }
}
